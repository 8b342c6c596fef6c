"""Ensembles of independently trained models combined by plurality vote.

Each member trains on its own random 90/10 train/dev split of the same
corpus; all members share one alphabet and label set built from the full
corpus before splitting.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import IO, Sequence

import numpy as np

from .corpus import (
    Alphabet,
    LabeledExample,
    LabelSet,
    build_alphabet,
    build_label_set,
    encode_corpus,
    split_train_dev,
)
from .model import ModelConfig, ModelParams, Prediction, predict
from .train import TrainConfig, train_model


@dataclass
class Ensemble:
    """Trained members plus the shared alphabet and label set."""

    members: list[tuple[ModelParams, ModelConfig]]
    alphabet: Alphabet
    labels: LabelSet
    member_seeds: list[int]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        first = self.members[0][1]
        for _, cfg in self.members:
            if (
                cfg.alphabet_size != first.alphabet_size
                or cfg.max_len != first.max_len
                or cfg.num_classes != first.num_classes
            ):
                raise ValueError("ensemble members disagree on alphabet size, max_len or classes")
        if first.alphabet_size != self.alphabet.size:
            raise ValueError("ensemble alphabet does not match member configs")
        if first.num_classes != self.labels.size:
            raise ValueError("ensemble label set does not match member configs")


def vote(predictions: Sequence[Prediction]) -> tuple[int, np.ndarray]:
    """Plurality vote over member predictions.

    The label with the most first-place votes wins; ties break first by the
    highest probability summed across all members, then by the lowest label
    index. Returns (winning label index, per-class vote tally).
    """
    if not predictions:
        raise ValueError("cannot vote over an empty prediction list")
    k = len(predictions[0].probabilities)
    tally = np.zeros(k, dtype=np.int64)
    summed = np.zeros(k, dtype=np.float64)
    for pred in predictions:
        if len(pred.probabilities) != k:
            raise ValueError("predictions cover different numbers of classes")
        tally[pred.label] += 1
        summed += pred.probabilities
    contenders = np.flatnonzero(tally == tally.max())
    if len(contenders) == 1:
        return int(contenders[0]), tally
    best = contenders[0]
    for c in contenders[1:]:
        if summed[c] > summed[best]:
            best = c
    return int(best), tally


def member_predictions(ensemble: Ensemble, encoded: np.ndarray) -> list[Prediction]:
    """Each member's prediction for one encoded text."""
    return [predict(params, cfg, encoded) for params, cfg in ensemble.members]


def predict_ensemble(ensemble: Ensemble, encoded: np.ndarray) -> tuple[int, np.ndarray]:
    """Vote the members' predictions for one encoded text."""
    return vote(member_predictions(ensemble, encoded))


def train_ensemble(
    corpus: Sequence[LabeledExample],
    k: int,
    model_config: ModelConfig,
    train_config: TrainConfig,
    base_seed: int,
    dev_fraction: float = 0.1,
    jobs: int = 1,
    log_streams: Sequence[IO[str]] = (),
) -> Ensemble:
    """Train ``k`` members, member i on split_train_dev(corpus, dev_fraction,
    base_seed + i) with seed base_seed + i for initialization and shuffling.

    Members are independent, so results do not depend on training order;
    ``jobs`` > 1 trains them concurrently.
    """
    if k < 1:
        raise ValueError("ensemble size must be >= 1")
    alphabet = build_alphabet(corpus)
    labels = build_label_set(corpus)
    if model_config.alphabet_size != alphabet.size:
        raise ValueError(
            f"model config alphabet_size {model_config.alphabet_size} != corpus alphabet size {alphabet.size}"
        )
    if model_config.num_classes != labels.size:
        raise ValueError(
            f"model config num_classes {model_config.num_classes} != corpus classes {labels.size}"
        )

    def train_member(i: int) -> tuple[ModelParams, ModelConfig]:
        seed = base_seed + i
        train_part, dev_part = split_train_dev(corpus, dev_fraction, seed)
        train_enc = encode_corpus(train_part, alphabet, labels, model_config.max_len)
        dev_enc = encode_corpus(dev_part, alphabet, labels, model_config.max_len)
        member_tc = replace(train_config, seed=seed)
        try:
            params, _ = train_model(train_enc, dev_enc, model_config, member_tc, log_streams=log_streams)
        except Exception as exc:
            raise RuntimeError(f"training ensemble member {i} failed: {exc}") from exc
        return params, model_config

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            members = list(pool.map(train_member, range(k)))
    else:
        members = [train_member(i) for i in range(k)]

    return Ensemble(
        members=members,
        alphabet=alphabet,
        labels=labels,
        member_seeds=[base_seed + i for i in range(k)],
    )
