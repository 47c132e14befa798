"""Walsh phase-plane tools for lacunary partial sums of Walsh-Fourier series."""

from .dyadic import (
    DyadicFunction,
    LacunarySequence,
    inverse_walsh_transform,
    lacunary_maximal,
    partial_sum,
    walsh_function,
    walsh_transform,
)
from .orlicz import gauge, luxembourg_norm
from .phase_plane import (
    BiTile,
    ChoiceFunction,
    Tile,
    TileCollection,
    Tree,
    bilinear_form,
    carleson_apply,
    density,
    enumerate_bitiles,
    size,
)

__version__ = "0.1.0"
