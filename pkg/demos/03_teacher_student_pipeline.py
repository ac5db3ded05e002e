"""
Teacher, self-supervised student, distillation
===============================================

A scaled-down run of the three training stages on four classes. The teacher
sees dark and retinex streams through one shared encoder and fuses them per
timestep; the student only ever sees dark frames.
"""

import torch

from actlumos.clipgen import generate_dataset
from actlumos.trainer import ClipBank, TrainConfig, distill_student, evaluate, pretrain_student_ssl, train_teacher

torch.set_num_threads(1)
small = dict(epochs=20, channels=16, head_layers=1, head_heads=2)

bank = ClipBank.from_dataset(generate_dataset(4, 10, (16, 32, 32), profile_sampler_seed=0))
log = lambda rec: print(f"  {rec['stage']} epoch {rec['epoch']}: loss {rec['loss']['total']:.4f}")  # noqa: E731

print("teacher (DFF fusion, CE + SupCon)")
teacher = train_teacher(TrainConfig(stage="teacher", **small), bank, log=log)

print("student SSL pretraining on unlabelled dark clips")
ssl = pretrain_student_ssl(TrainConfig(stage="ssl", **small), ClipBank.unlabeled_pool(bank), log=log)

print("student distillation")
student = distill_student(TrainConfig(stage="distill", **small), bank, teacher, ssl, log=log)

for name, ckpt in (("teacher", teacher), ("student", student)):
    m = evaluate(ckpt, bank, "test")
    print(f"{name}: test top-1 {m.top1:.3f}, top-5 {m.top5:.3f}")

# Frame gate weights of the teacher on a few test clips.
from actlumos.trainer import load_teacher  # noqa: E402

model = load_teacher(teacher).eval()
idx = bank.split_indices("test")[:3]
with torch.no_grad():
    model(bank.dark[idx], bank.retinex[idx])
print("dark-stream gate weight per timestep:")
print(model.fusion.last_weights[..., 0])
print("retinex reads during student training:", student.meta["student_retinex_reads"])
