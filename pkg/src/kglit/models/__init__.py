"""Link-prediction models: four base scorers and the literal-fusion variants."""

from .base import (
    MarginBatch,
    Model,
    OneToNBatch,
    bce_with_logits,
    load_checkpoint,
    save_checkpoint,
)
from .bilinear import KBLN, ComplEx, DistMult, TuckER, complex_score, distmult_score, rbf_statistics, tucker_score
from .literale import LiteralEComplEx, LiteralEDistMult, literale_enrich
from .mtkgnn import MTKGNN
from .translational import TransE, TransEA, transe_score

MODELS = {
    cls.name: cls
    for cls in (TransE, DistMult, ComplEx, TuckER, LiteralEDistMult, LiteralEComplEx, KBLN, MTKGNN, TransEA)
}


def build_model(name, n_entities, n_relations, n_attrs=0, dim=200, seed=0, **options) -> Model:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(n_entities, n_relations, n_attrs, dim=dim, seed=seed, **options)


__all__ = [
    "KBLN",
    "MODELS",
    "MTKGNN",
    "ComplEx",
    "DistMult",
    "LiteralEComplEx",
    "LiteralEDistMult",
    "MarginBatch",
    "Model",
    "OneToNBatch",
    "TransE",
    "TransEA",
    "TuckER",
    "bce_with_logits",
    "build_model",
    "complex_score",
    "distmult_score",
    "literale_enrich",
    "load_checkpoint",
    "rbf_statistics",
    "save_checkpoint",
    "transe_score",
    "tucker_score",
]
