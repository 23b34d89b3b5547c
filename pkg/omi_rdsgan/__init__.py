__version__ = "0.1.0"

from ._exceptions import *
from ._exit_code import exit_codes, trace_codes, ExitCode, TraceCode
from ._model import *
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Corpus, load_corpus, make_synthetic
from .encoder import CNNEncoderBackend, EncoderBackend
from .evaluation import evaluate, predict
from .rdsgan_model import RDSGAN, RDSGANModel, rdsgan_model_builder
from .trainer import RDSGANTrainer, train
