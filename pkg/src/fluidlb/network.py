"""Bipartite frontend/backend topology with latencies, arrivals, and rates.

A :class:`Network` is an immutable value: arrays are frozen after
construction so instances can be shared freely across threads and worker
processes. The on-disk interchange format (used by every CLI command) is

.. code-block:: json

    {"frontends": F, "backends": B,
     "arcs": [[i, j, tau], ...],
     "lambda": [l_0, ..., l_{F-1}],
     "rates": [{"family": "sqrt", "a": 1.0, "b": 2.0}, ...]}

with 0-based indices and one rate object per backend.
"""

from __future__ import annotations

import json

import numpy as np

from . import rates as _rates
from .errors import InfeasibleInstanceError
from .rates import ProcessingRate


class Network:
    def __init__(self, frontends: int, backends: int, arcs, lam, rate_fns):
        """arcs: iterable of (frontend, backend, tau) triples."""
        if frontends < 1 or backends < 1:
            raise ValueError("need at least one frontend and one backend")
        self.F = int(frontends)
        self.B = int(backends)
        self.rates: tuple[ProcessingRate, ...] = tuple(rate_fns)
        if len(self.rates) != self.B:
            raise ValueError(f"expected {self.B} rate functions, got {len(self.rates)}")

        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.F,):
            raise ValueError(f"lambda must have shape ({self.F},)")
        if not np.all(lam > 0.0):
            raise ValueError("all arrival rates must be positive")

        mask = np.zeros((self.F, self.B), dtype=bool)
        tau = np.zeros((self.F, self.B))
        for i, j, t in arcs:
            i, j, t = int(i), int(j), float(t)
            if not (0 <= i < self.F and 0 <= j < self.B):
                raise ValueError(f"arc ({i},{j}) out of range")
            if mask[i, j]:
                raise ValueError(f"duplicate arc ({i},{j})")
            if not t > 0.0:
                raise ValueError(f"latency of arc ({i},{j}) must be positive, got {t}")
            mask[i, j] = True
            tau[i, j] = t
        if not mask.any(axis=1).all():
            raise ValueError("every frontend needs at least one arc")
        if not mask.any(axis=0).all():
            raise ValueError("every backend needs at least one arc")

        self.lam = lam
        self.mask = mask
        self.tau = tau
        self.fam, self.p1, self.p2 = _rates.pack_rates(self.rates)
        for a in (self.lam, self.mask, self.tau, self.fam, self.p1, self.p2):
            a.setflags(write=False)

    # -- derived views ------------------------------------------------------

    @property
    def arcs(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(self.mask)
        return list(zip(ii.tolist(), jj.tolist()))

    def neighbors_of_frontend(self, i: int) -> np.ndarray:
        return np.nonzero(self.mask[i])[0]

    def neighbors_of_backend(self, j: int) -> np.ndarray:
        return np.nonzero(self.mask[:, j])[0]

    def capacities(self) -> np.ndarray:
        return _rates.capacity_vec(self.fam, self.p1, self.p2)

    def max_latency(self) -> float:
        return float(self.tau[self.mask].max())

    def min_latency(self) -> float:
        return float(self.tau[self.mask].min())

    def total_arrival(self) -> float:
        return float(self.lam.sum())

    def check_total_capacity(self) -> None:
        cap = self.capacities().sum()
        if self.total_arrival() >= cap:
            raise InfeasibleInstanceError(
                f"total arrival {self.total_arrival():.6g} is not below "
                f"total capacity {cap:.6g}"
            )

    # -- interchange --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "frontends": self.F,
            "backends": self.B,
            "arcs": [[i, j, float(self.tau[i, j])] for i, j in self.arcs],
            "lambda": self.lam.tolist(),
            "rates": [r.to_dict() for r in self.rates],
        }

    @staticmethod
    def from_dict(d: dict) -> "Network":
        try:
            return Network(
                frontends=d["frontends"],
                backends=d["backends"],
                arcs=d["arcs"],
                lam=d["lambda"],
                rate_fns=[ProcessingRate.from_dict(r) for r in d["rates"]],
            )
        except KeyError as e:
            raise ValueError(f"instance JSON missing key {e.args[0]!r}") from e

    @staticmethod
    def from_json(path) -> "Network":
        with open(path) as fh:
            return Network.from_dict(json.load(fh))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.F == other.F
            and self.B == other.B
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.tau, other.tau)
            and np.array_equal(self.lam, other.lam)
            and self.rates == other.rates
        )

    def __repr__(self) -> str:
        return f"Network(F={self.F}, B={self.B}, arcs={int(self.mask.sum())})"
