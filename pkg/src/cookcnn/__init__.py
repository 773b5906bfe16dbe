"""From-scratch numpy CNN for classifying the state of cooking objects."""

from .checkpoint import load_checkpoint, save_checkpoint
from .data import AugConfig, CLASS_NAMES, augment, compute_stats, decode_image, normalize, \
    resize_center_crop, scan_dataset
from .layers import grad_check, softmax_cross_entropy
from .metrics import classification_report, confusion_matrix, normalize_cm
from .model import ModelGraph, ModelSpec, count_params, preset_proposed, preset_vgg16
from .optim import LrSchedule, lr_at_epoch, make_optimizer
from .tensor import Rng, kaiming_uniform_init, matmul, tensor_create
from .train import EarlyStopping, TrainConfig, evaluate, train

__version__ = "0.1.0"
