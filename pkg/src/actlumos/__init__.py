"""Dark-video action recognition with a dual-stream teacher and a distilled single-stream student."""

from . import ablation, gradcheck, verify
from .checkpoint import Checkpoint, CheckpointError
from .clipgen import (IlluminationProfile, ManifestError, SyntheticDataset, VideoClip, generate_clip,
                      generate_dataset, load_dataset, save_dataset)
from .encoder import DegenerateEmbeddingError, Encoder, EncoderConfig, clip_embedding, encode, spatial_gap
from .enhance import RetinexParams, estimate_illumination, gamma_correct, retinex_enhance
from .fusion import (DFFGate, Fusion, StaticConcatFusion, TemporalHead, TemporalHeadConfig, dff_fuse, dff_gate,
                     static_concat_fuse, temporal_head)
from .gradcheck import grad_check
from .models import InputNorm, ProbeModel, StudentModel, TeacherModel
from .objectives import (EmbeddingBatch, LossValue, ce_loss, kd_loss, positive_negative_sets, ssl_loss,
                         student_loss, supcon_loss, teacher_loss)
from .sampler import AugmentParams, balanced_batch, spatial_augment, two_view
from .trainer import (ClipBank, Metrics, TrainConfig, distill_student, evaluate, linear_probe,
                      pretrain_student_ssl, train_teacher)

__version__ = "0.1.0"
