"""charlid: a character-level CNN toolkit for discriminating similar
languages and dialects.

Pipeline: load labeled texts, build a character alphabet, encode to
fixed-length index sequences, train a convolutional classifier with Adam
and early stopping (optionally an ensemble combined by plurality vote),
then evaluate with accuracy and micro/macro/weighted F1.
"""

from .corpus import (
    Alphabet,
    Batch,
    DataFormatError,
    LabeledExample,
    LabelSet,
    PAD_INDEX,
    UNK_INDEX,
    batches,
    build_alphabet,
    build_label_set,
    encode,
    encode_corpus,
    load_dsl_file,
    load_texts,
    split_train_dev,
)
from .ensemble import Ensemble, predict_ensemble, train_ensemble, vote
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    confusion,
    majority_baseline,
    parse_confusion_csv,
    random_baseline,
    render_confusion,
    report,
)
from .model import (
    ForwardCache,
    ModelConfig,
    ModelParams,
    Prediction,
    backward,
    conv_relu_forward,
    cross_entropy,
    forward,
    gradient_check,
    init_params,
    max_pool_over_time,
    predict,
    predict_probs,
    run_gradient_check_suite,
    softmax,
    tiny_gradcheck_config,
)
from .persist import (
    ModelFormatError,
    load_ensemble,
    load_model,
    save_ensemble,
    save_model,
)
from .train import (
    AdamState,
    TrainConfig,
    TrainHistory,
    adam_step,
    dataset_metrics,
    train_fixed_epochs,
    train_model,
)

__version__ = "1.0.0"

__all__ = [
    "Alphabet",
    "AdamState",
    "Batch",
    "ConfusionMatrix",
    "DataFormatError",
    "Ensemble",
    "EvalReport",
    "ForwardCache",
    "LabelSet",
    "LabeledExample",
    "ModelConfig",
    "ModelFormatError",
    "ModelParams",
    "PAD_INDEX",
    "Prediction",
    "TrainConfig",
    "TrainHistory",
    "UNK_INDEX",
    "adam_step",
    "backward",
    "batches",
    "build_alphabet",
    "build_label_set",
    "confusion",
    "conv_relu_forward",
    "cross_entropy",
    "dataset_metrics",
    "encode",
    "encode_corpus",
    "forward",
    "gradient_check",
    "init_params",
    "load_dsl_file",
    "load_ensemble",
    "load_model",
    "load_texts",
    "majority_baseline",
    "max_pool_over_time",
    "parse_confusion_csv",
    "predict",
    "predict_ensemble",
    "predict_probs",
    "random_baseline",
    "render_confusion",
    "report",
    "run_gradient_check_suite",
    "save_ensemble",
    "save_model",
    "softmax",
    "split_train_dev",
    "tiny_gradcheck_config",
    "train_ensemble",
    "train_fixed_epochs",
    "train_model",
    "vote",
]
