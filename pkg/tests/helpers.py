"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from charlid import LabeledExample, ModelConfig, init_params

SEPARABLE_CHARSETS = ("abcde", "fghij", "klmno")


def synthetic_corpus(n_per_class: int, seed: int, charsets=SEPARABLE_CHARSETS, max_len: int = 40):
    """Trivially separable corpus: class i draws only from charsets[i]."""
    rng = np.random.default_rng(seed)
    examples = []
    for ci, chars in enumerate(charsets):
        for _ in range(n_per_class):
            length = int(rng.integers(10, max_len))
            text = "".join(rng.choice(list(chars), size=length))
            examples.append(LabeledExample(text=text, label=f"class{ci}"))
    return examples


def write_dsl_file(path, examples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(f"{ex.text}\t{ex.label}\n")


def small_config(**overrides) -> ModelConfig:
    base = dict(
        alphabet_size=12,
        num_classes=3,
        max_len=15,
        embed_dim=4,
        filter_spec=((2, 3), (3, 2)),
        fc_dim=5,
        dropout_embed=0.0,
        dropout_fc=0.0,
    )
    base.update(overrides)
    return ModelConfig(**base)


def random_model(seed: int, dtype=np.float32):
    """A random tiny (config, params) pair; shapes vary with the seed."""
    rng = np.random.default_rng(seed)
    widths = sorted(rng.choice(range(1, 5), size=int(rng.integers(1, 4)), replace=False))
    spec = tuple((int(w), int(rng.integers(1, 5))) for w in widths)
    config = ModelConfig(
        alphabet_size=int(rng.integers(3, 12)),
        num_classes=int(rng.integers(2, 6)),
        max_len=int(rng.integers(5, 12)),
        embed_dim=int(rng.integers(1, 6)),
        filter_spec=spec,
        fc_dim=int(rng.integers(0, 7)),
        dropout_embed=float(rng.uniform(0.0, 0.5)),
        dropout_fc=float(rng.uniform(0.0, 0.5)),
    )
    params = init_params(config, seed=int(rng.integers(0, 2**31)), dtype=dtype)
    return config, params


def random_inputs(config: ModelConfig, batch_size: int, seed: int):
    rng = np.random.default_rng(seed)
    inputs = rng.integers(0, config.alphabet_size, size=(batch_size, config.max_len), dtype=np.int32)
    labels = rng.integers(0, config.num_classes, size=batch_size, dtype=np.int64)
    return inputs, labels
