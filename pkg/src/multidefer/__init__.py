"""Joint training of a classifier and a deferrer over multiple human experts."""

from .data import Dataset, ExpertCostVector, ExpertPredictionMatrix, SplitIndices, split
from .inference import predict, predict_batch, predict_sparse, predict_sparse_batch
from .losses import Batch, LossConfig, joint_loss, joint_loss_and_grad
from .models import ClassifierModel, DeferrerModel, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainReport, train, train_balanced, train_joint, train_minimax

__version__ = "0.1.0"
