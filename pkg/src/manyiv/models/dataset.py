"""Pydantic model for an IV dataset: outcome, endogenous regressor, instruments, controls."""

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from manyiv.errors import ManyIVError
from manyiv.utils.linalg import DEFAULT_RTOL, retained_columns


class DatasetError(ManyIVError):
    """Raised when arrays cannot form a valid dataset."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


class Dataset(BaseModel):
    """Y, X, Z and W for one linear IV regression.

    Arrays are copied and made read-only on construction. Use ``from_arrays``
    to drop collinear instrument/control columns before validation.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    y: np.ndarray
    x: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    instrument_names: list[str] = Field(default_factory=list)
    control_names: list[str] = Field(default_factory=list)
    dropped_instruments: list[str] = Field(default_factory=list)
    dropped_controls: list[str] = Field(default_factory=list)
    group_labels: np.ndarray | None = None

    @field_validator("y", "x", mode="before")
    @classmethod
    def _coerce_vector(cls, value: Any) -> np.ndarray:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 2 and 1 in arr.shape:
            arr = arr.reshape(-1)
        if arr.ndim != 1:
            raise DatasetError(f"outcome/regressor must be a vector, got shape {arr.shape}")
        return _frozen(arr)

    @field_validator("Z", "W", mode="before")
    @classmethod
    def _coerce_matrix(cls, value: Any) -> np.ndarray:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise DatasetError(f"instrument/control block must be a matrix, got shape {arr.shape}")
        return _frozen(arr)

    @model_validator(mode="after")
    def _check_shapes(self) -> "Dataset":
        n = self.y.shape[0]
        for name, arr in (("x", self.x), ("Z", self.Z), ("W", self.W)):
            if arr.shape[0] != n:
                raise DatasetError(f"{name} has {arr.shape[0]} rows, expected {n}")
        for name, arr in (("y", self.y), ("x", self.x), ("Z", self.Z), ("W", self.W)):
            if not np.all(np.isfinite(arr)):
                raise DatasetError(f"non-finite entries in {name}")
        if self.Z.shape[1] < 1:
            raise DatasetError("at least one instrument is required")
        if n <= self.k_z + self.k_w:
            raise DatasetError(
                f"need N > K_Z + K_W, got N={n}, K_Z={self.k_z}, K_W={self.k_w}"
            )
        if self.instrument_names and len(self.instrument_names) != self.k_z:
            raise DatasetError("instrument_names does not match the number of instruments")
        if self.control_names and len(self.control_names) != self.k_w:
            raise DatasetError("control_names does not match the number of controls")
        if self.group_labels is not None and np.asarray(self.group_labels).shape != (n,):
            raise DatasetError("group_labels must have one label per observation")
        return self

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def k_z(self) -> int:
        return int(self.Z.shape[1])

    @property
    def k_w(self) -> int:
        return int(self.W.shape[1])

    @property
    def has_controls(self) -> bool:
        return self.k_w > 0

    def with_outcome(self, y: np.ndarray) -> "Dataset":
        """Same design with a different outcome vector."""
        return self.model_copy(update={"y": _frozen(np.asarray(y, dtype=float).reshape(-1))})

    def with_regressor(self, x: np.ndarray) -> "Dataset":
        return self.model_copy(update={"x": _frozen(np.asarray(x, dtype=float).reshape(-1))})

    @classmethod
    def from_arrays(
        cls,
        y: np.ndarray,
        x: np.ndarray,
        Z: np.ndarray,
        W: np.ndarray | None = None,
        instrument_names: list[str] | None = None,
        control_names: list[str] | None = None,
        group_labels: np.ndarray | None = None,
        rtol: float = DEFAULT_RTOL,
    ) -> "Dataset":
        """Build a dataset, dropping collinear columns of Z and of W."""
        z = np.asarray(Z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        n = z.shape[0]
        w = np.zeros((n, 0)) if W is None else np.asarray(W, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        for name, arr in (("Z", z), ("W", w)):
            if not np.all(np.isfinite(arr)):
                raise DatasetError(f"non-finite entries in {name}")

        z_names = instrument_names or [f"z{i + 1}" for i in range(z.shape[1])]
        w_names = control_names or [f"w{i + 1}" for i in range(w.shape[1])]

        keep_z = retained_columns(z, rtol) if z.shape[1] else []
        if not keep_z:
            raise DatasetError("instrument matrix has rank zero")
        keep_w = retained_columns(w, rtol) if w.shape[1] else []

        return cls(
            y=y,
            x=x,
            Z=z[:, keep_z],
            W=w[:, keep_w] if w.shape[1] else w,
            instrument_names=[z_names[i] for i in keep_z],
            control_names=[w_names[i] for i in keep_w],
            dropped_instruments=[z_names[i] for i in range(z.shape[1]) if i not in keep_z],
            dropped_controls=[w_names[i] for i in range(w.shape[1]) if i not in keep_w],
            group_labels=group_labels,
        )
