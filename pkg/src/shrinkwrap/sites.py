"""Weighted sites: the points competing for territory on the guiding surface.

Real sites are input points and must all end up interpolated; virtual sites
are interior helpers that may attach once and are then retired. The bulk
container keeps everything in flat arrays because the diagram code is
vectorized; `WeightedSite` is the single-site view used by small APIs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import InputError


class SiteKind(IntEnum):
    REAL = 0
    VIRTUAL = 1


class SiteStatus(IntEnum):
    UNATTACHED = 0
    ATTACHED = 1
    RETIRED = 2


@dataclass(frozen=True)
class WeightedSite:
    id: int
    position: np.ndarray
    weight: float = 0.0
    kind: SiteKind = SiteKind.REAL
    status: SiteStatus = SiteStatus.UNATTACHED

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,) or not np.isfinite(pos).all():
            raise InputError("site position must be a finite 3-vector")
        if not np.isfinite(self.weight):
            raise InputError("site weight must be finite")
        if self.status == SiteStatus.RETIRED and self.kind != SiteKind.VIRTUAL:
            raise InputError("only virtual sites can be retired")
        object.__setattr__(self, "position", pos)


class SiteSet:
    """Flat-array store of all sites participating in a reconstruction.

    ``positions`` live in the working frame; ``orig_positions`` preserve the
    caller's coordinates bit-for-bit so interpolated outputs can copy them.
    """

    def __init__(self, positions, kinds=None, orig_positions=None):
        pos = np.ascontiguousarray(positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or len(pos) == 0:
            raise InputError("positions must be a non-empty (n, 3) array")
        if not np.isfinite(pos).all():
            raise InputError("site positions must be finite")
        n = len(pos)
        self.positions = pos
        self.weights = np.zeros(n)
        if kinds is None:
            kinds = np.full(n, SiteKind.REAL, dtype=np.uint8)
        self.kinds = np.asarray(kinds, dtype=np.uint8)
        self.status = np.full(n, SiteStatus.UNATTACHED, dtype=np.uint8)
        self.orig_positions = (
            np.ascontiguousarray(orig_positions, dtype=float)
            if orig_positions is not None
            else pos.copy()
        )

    def __len__(self):
        return len(self.positions)

    def site(self, i: int) -> WeightedSite:
        return WeightedSite(
            id=int(i),
            position=self.positions[i].copy(),
            weight=float(self.weights[i]),
            kind=SiteKind(self.kinds[i]),
            status=SiteStatus(self.status[i]),
        )

    @property
    def real_mask(self) -> np.ndarray:
        return self.kinds == SiteKind.REAL

    @property
    def virtual_mask(self) -> np.ndarray:
        return self.kinds == SiteKind.VIRTUAL

    @property
    def active_mask(self) -> np.ndarray:
        return self.status != SiteStatus.RETIRED

    @property
    def attached_mask(self) -> np.ndarray:
        return self.status == SiteStatus.ATTACHED

    @property
    def unattached_mask(self) -> np.ndarray:
        return self.status == SiteStatus.UNATTACHED

    def indices(self, mask) -> np.ndarray:
        return np.nonzero(mask)[0]

    @staticmethod
    def concat(a: "SiteSet", b: "SiteSet") -> "SiteSet":
        out = SiteSet(
            np.vstack([a.positions, b.positions]),
            kinds=np.concatenate([a.kinds, b.kinds]),
            orig_positions=np.vstack([a.orig_positions, b.orig_positions]),
        )
        out.weights = np.concatenate([a.weights, b.weights])
        out.status = np.concatenate([a.status, b.status])
        return out
