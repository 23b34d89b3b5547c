from typing import Dict, List, Literal, Optional, Type, TypeVar

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from ._exceptions import ConfigError

ModelType = TypeVar("ModelType", bound=BaseModel)


class ModelDims(BaseModel):
    """Network dimensions. Defaults are the published NYT settings."""
    model_config = ConfigDict(extra="forbid")

    word_dim: PositiveInt = 50
    pos_dim: PositiveInt = 10
    filters: PositiveInt = 230
    window: PositiveInt = 3
    max_len: PositiveInt = 120
    gen_hidden: PositiveInt = 64
    disc_hidden: PositiveInt = 100
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    encoder_backend: str = "omi_rdsgan.encoder.CNNEncoderBackend"
    dtype: Literal["float32", "float64"] = "float32"

    @model_validator(mode="after")
    def _check_window(self):
        if self.window % 2 != 1:
            raise ValueError("window must be odd")
        if self.max_len < self.window:
            raise ValueError(f"max_len {self.max_len} is shorter than the convolution window {self.window}")
        return self

    @property
    def token_dim(self) -> int:
        return self.word_dim + 2 * self.pos_dim

    @property
    def n_pos_buckets(self) -> int:
        return 2 * self.max_len - 1


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    s_d: NonNegativeInt = 1
    s_g: NonNegativeInt = 1
    s_r: NonNegativeInt = 1
    outer_iterations: NonNegativeInt = 100
    batch_size: PositiveInt = 160
    lr_g: PositiveFloat = 1e-5
    lr_d: PositiveFloat = 1e-4
    lambda1: PositiveFloat = 1.0
    lambda2: PositiveFloat = 1.0
    k: PositiveInt = 1
    seed: int = 0
    non_saturating_g: bool = False
    literal_rank_loss: bool = False
    gen_in_class_loss: bool = True
    gen_dropout_in_rank_phase: bool = True
    log_wall_time: bool = False
    verify_isolation: bool = False


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_relations: int = Field(5, ge=2)
    n_pairs: PositiveInt = 200
    n_test_pairs: NonNegativeInt = 0
    instances_per_bag: PositiveInt = 3
    vocab_size: int = Field(200, ge=8)
    noise_rate: float = Field(0.0, ge=0.0, lt=1.0)
    sentence_len: int = Field(12, ge=5)


class RunConfigFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train_corpus: str
    test_corpus: Optional[str] = None
    output_dir: str = "runs/default"
    corpus_format: Literal["jsonl", "nyt-tsv"] = "jsonl"
    relation_file: Optional[str] = None
    min_count: PositiveInt = 1
    model: ModelDims = Field(default_factory=ModelDims)
    train: TrainConfig = Field(default_factory=TrainConfig)


class TrainLogRecord(BaseModel):
    iteration: NonNegativeInt
    phase: Literal["discriminator", "generator_adv", "generator_rank"]
    step: NonNegativeInt
    objective: float
    mean_d_real: Optional[float] = None
    mean_d_fake: Optional[float] = None
    mean_gen_rank: Optional[float] = None
    l1: Optional[float] = None
    l2: Optional[float] = None
    wall_time: float = 0.0


class Prediction(BaseModel):
    head_id: str
    tail_id: str
    relation_id: PositiveInt
    score: float = Field(ge=0.0, le=1.0)


class PRPoint(BaseModel):
    rank: PositiveInt
    score: float
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)


class MetricsReport(BaseModel):
    p_at: Dict[str, Optional[float]]
    mean: Optional[float]
    auc: float
    auc_recall_0_4: float
    counts: Dict[str, int]


class BagAttention(BaseModel):
    head_id: str
    tail_id: str
    relation: str
    weights: List[float]
    noise_flags: List[bool]


class GeneratedRecord(BaseModel):
    head_id: str
    tail_id: str
    head: str
    tail: str
    relation: str
    rank: PositiveInt
    bag_size: PositiveInt
    score: float = Field(ge=0.0, le=1.0)
    match_score: float
    attention: float = Field(ge=0.0, le=1.0)
    vector: List[float]


def parse_config(model: Type[ModelType], data: Dict) -> ModelType:
    """Validate ``data`` against ``model``, raising ConfigError with pydantic's message on failure."""
    try:
        return model.model_validate(data)
    except ValidationError as err:
        raise ConfigError(f"invalid {model.__name__}: {err}")
