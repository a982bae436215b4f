"""Segment-mean compression of the horizon demand for the classifier input."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError
from .mip import SystemState


@dataclass(frozen=True)
class ReductionConfig:
    n_segments: int
    seg_len: int

    def __post_init__(self):
        if self.n_segments < 1 or self.seg_len < 1:
            raise InvalidParameterError("need n_segments >= 1 and seg_len >= 1")

    @property
    def span(self) -> int:
        """Number of flow slots consumed (``H * N_s``)."""
        return self.n_segments * self.seg_len

    @classmethod
    def identity(cls, horizon: int) -> "ReductionConfig":
        """No averaging: one segment per service slot."""
        return cls(horizon, 1)


@dataclass(frozen=True)
class LearningState:
    x: np.ndarray
    rho_reduced: np.ndarray  # (platforms, n_segments)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.rho_reduced.ravel()])

    @property
    def dim(self) -> int:
        return self.x.size + self.rho_reduced.size


def reduce_flow(flow, config: ReductionConfig) -> np.ndarray:
    flow = np.asarray(flow, dtype=float)
    if flow.shape[-1] != config.span:
        raise DimensionMismatchError(f"flow slice has {flow.shape[-1]} entries, expected {config.span}")
    return flow.reshape(*flow.shape[:-1], config.n_segments, config.seg_len).mean(axis=-1)


def to_learning_state(state: SystemState, config: ReductionConfig) -> LearningState:
    if state.rho.shape[1] < config.span:
        raise DimensionMismatchError(
            f"state carries {state.rho.shape[1]} flow slots, reduction needs {config.span}")
    return LearningState(state.x.copy(), reduce_flow(state.rho[:, :config.span], config))


def learning_dim(x_dim: int, n_platforms: int, config: ReductionConfig) -> int:
    return x_dim + n_platforms * config.n_segments
