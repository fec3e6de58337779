"""Trial data loading and design-matrix construction.

A trial is two-arm by contract: arm labels are canonicalized to {1, 2}
(an explicit relabel map handles anything else).  Designs carry two
complementary arm indicator columns and no separate intercept, so every
row has exactly one of the first two columns set.  Covariates enter
either as shared columns (homogeneous) or as per-arm interaction columns
(heterogeneous).  The per-arm coding makes counterfactual substitution a
pure column operation: no refit, no access to the original frame.

Covariate transformations (centering, dummies, splines) are out of
scope; callers precompute derived columns and name them in the schema.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    DegenerateArmError,
    EmptyDataError,
    SchemaError,
)

FAMILY_NAMES = ("bernoulli-logit", "poisson-log", "gaussian-identity")

# tokens treated as missing (case-insensitive, after strip); anything else
# non-numeric in a numeric column is a hard error, not a silent drop
_MISSING_TOKENS = frozenset({"", "na", "nan", "n/a", "null"})


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


# ------------------------------------------------------------------ #
# Domain types
# ------------------------------------------------------------------ #


@dataclass(frozen=True)
class TrialDataset:
    """Validated two-arm trial data; all arrays are read-only.

    outcome : (n,) float
    arm     : (n,) int, values in {1, 2}, both present
    covariates : (n, q) float, column order matches covariate_names
    stratum : optional (n,) int labels, used only by randomization schemes
    """

    outcome: np.ndarray
    arm: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    stratum: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.outcome, dtype=float)
        arm = np.asarray(self.arm, dtype=int)
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(-1, 1 if self.covariate_names else 0)
        if cov.ndim != 2:
            raise DataError("covariates must be a 2-d array")
        n = y.shape[0]
        if n < 2:
            raise EmptyDataError(f"need at least 2 subjects, got {n}")
        if arm.shape != (n,) or cov.shape[0] != n:
            raise DataError("outcome, arm, and covariates must share length")
        if not np.isfinite(y).all():
            raise DataError("outcome contains non-finite values")
        if not np.isfinite(cov).all():
            raise DataError("covariates contain non-finite values")
        bad = set(np.unique(arm)) - {1, 2}
        if bad:
            raise DataError(f"arm labels outside {{1, 2}}: {sorted(bad)}")
        for a in (1, 2):
            if not np.any(arm == a):
                raise DegenerateArmError(f"arm {a} has no subjects")
        if len(self.covariate_names) != cov.shape[1]:
            raise SchemaError("covariate_names length does not match columns")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise SchemaError("duplicate covariate names")
        strat = self.stratum
        if strat is not None:
            strat = np.asarray(strat)
            if strat.shape != (n,):
                raise DataError("stratum must have one label per subject")
            strat = _readonly(strat)
        object.__setattr__(self, "outcome", _readonly(y))
        object.__setattr__(self, "arm", _readonly(arm))
        object.__setattr__(self, "covariates", _readonly(cov))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "stratum", strat)

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    def arm_sizes(self) -> tuple[int, int]:
        return int(np.sum(self.arm == 1)), int(np.sum(self.arm == 2))


@dataclass(frozen=True)
class ModelSpec:
    """Working-model recipe: family name, covariates, effect structure.

    ``heterogeneous=True`` gives every covariate its own slope per arm;
    ``covariates=()`` is the arm-only (unadjusted) model.
    """

    family: str
    covariates: tuple[str, ...] = ()
    heterogeneous: bool = False

    def __post_init__(self):
        if self.family not in FAMILY_NAMES:
            raise SchemaError(
                f"unknown family {self.family!r}; expected one of {FAMILY_NAMES}")
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if len(set(self.covariates)) != len(self.covariates):
            raise SchemaError("duplicate covariates in model spec")


@dataclass(frozen=True)
class Term:
    """Symbolic recipe for one design column."""

    kind: str                 # "arm" | "covariate" | "interaction"
    arm: int | None = None    # for arm/interaction columns
    name: str | None = None   # covariate name

    def label(self) -> str:
        if self.kind == "arm":
            return f"arm{self.arm}"
        if self.kind == "covariate":
            return str(self.name)
        return f"{self.name}:arm{self.arm}"


@dataclass(frozen=True)
class DesignMatrix:
    """Realized design with per-column term descriptors.

    Columns 0 and 1 are always the arm-1 and arm-2 indicators.
    """

    X: np.ndarray
    terms: tuple[Term, ...]
    spec: ModelSpec

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.terms):
            raise DataError("design shape does not match terms")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def column_labels(self) -> tuple[str, ...]:
        return tuple(t.label() for t in self.terms)


@dataclass(frozen=True)
class ColumnSchema:
    """Column-role mapping for CSV loading.

    ``arm_map`` relabels raw arm values onto {1, 2}; keys may be numbers
    or strings and are matched against the parsed token.
    """

    outcome: str
    arm: str
    covariates: tuple[str, ...] = ()
    stratum: str | None = None
    arm_map: dict | None = None
    delimiter: str = ","

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        used = [self.outcome, self.arm, *self.covariates]
        if self.stratum is not None:
            used.append(self.stratum)
        if len(set(used)) != len(used):
            raise SchemaError("schema assigns one column to multiple roles")


# ------------------------------------------------------------------ #
# Loading
# ------------------------------------------------------------------ #


def _is_missing(token: str) -> bool:
    return token.strip().lower() in _MISSING_TOKENS


def _parse_number(token: str, column: str, row: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise DataError(
            f"non-numeric value {token!r} in column {column!r}, data row {row}"
        ) from None


def _canonical_arm(token: str, arm_map: dict | None, row: int) -> int:
    raw = token.strip()
    value: object = raw
    num = None
    try:
        num = float(raw)
    except ValueError:
        pass
    if num is not None:
        value = int(num) if float(num).is_integer() else num
    if arm_map:
        for key in (value, raw):
            if key in arm_map:
                value = arm_map[key]
                break
        else:
            raise DataError(f"arm value {raw!r} not in relabel map, data row {row}")
    if value in (1, 2, 1.0, 2.0):
        return int(value)
    raise DataError(f"arm value {raw!r} outside {{1, 2}} after mapping, data row {row}")


def load_csv(path: str, schema: ColumnSchema) -> tuple[TrialDataset, int]:
    """Read a trial CSV under ``schema``; complete cases only.

    Rows with a missing value in any used column are dropped; the count of
    dropped rows is returned alongside the dataset.  Non-numeric tokens in
    numeric columns are rejected outright rather than coerced.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        used = [schema.outcome, schema.arm, *schema.covariates]
        if schema.stratum is not None:
            used.append(schema.stratum)
        missing_cols = [c for c in used if c not in header]
        if missing_cols:
            raise SchemaError(f"{path}: missing columns {missing_cols}")
        idx = {c: header.index(c) for c in used}

        y, arm, cov, strat = [], [], [], []
        dropped = 0
        for rownum, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: data row {rownum} has {len(row)} fields, "
                    f"header has {len(header)}")
            tokens = {c: row[idx[c]] for c in used}
            if any(_is_missing(tokens[c]) for c in used):
                dropped += 1
                continue
            y.append(_parse_number(tokens[schema.outcome], schema.outcome, rownum))
            arm.append(_canonical_arm(tokens[schema.arm], schema.arm_map, rownum))
            cov.append([_parse_number(tokens[c], c, rownum)
                        for c in schema.covariates])
            if schema.stratum is not None:
                strat.append(tokens[schema.stratum].strip())

    if not y:
        raise EmptyDataError(f"{path}: no usable rows after dropping incomplete ones")
    data = TrialDataset(
        outcome=np.array(y),
        arm=np.array(arm),
        covariates=np.array(cov, dtype=float).reshape(len(y), len(schema.covariates)),
        covariate_names=schema.covariates,
        stratum=np.array(strat) if schema.stratum is not None else None,
    )
    return data, dropped


# ------------------------------------------------------------------ #
# Designs
# ------------------------------------------------------------------ #


def build_design(data: TrialDataset, spec: ModelSpec) -> DesignMatrix:
    """Assemble the working-model design for ``data`` under ``spec``.

    Homogeneous layout:    [I(A=1), I(A=2), W_1, ..., W_q]
    Heterogeneous layout:  [I(A=1), I(A=2), W_1*I(A=1), ..., W_q*I(A=1),
                            W_1*I(A=2), ..., W_q*I(A=2)]
    """
    unknown = [c for c in spec.covariates if c not in data.covariate_names]
    if unknown:
        raise SchemaError(f"model covariates not in dataset: {unknown}")
    a1 = (data.arm == 1).astype(float)
    a2 = (data.arm == 2).astype(float)
    cols = [a1, a2]
    terms = [Term("arm", arm=1), Term("arm", arm=2)]
    col_of = {name: data.covariates[:, data.covariate_names.index(name)]
              for name in spec.covariates}
    if spec.heterogeneous:
        for name in spec.covariates:
            if np.ptp(col_of[name]) == 0.0:
                warnings.warn(
                    f"covariate {name!r} is constant; its per-arm columns "
                    "duplicate the arm indicators", stacklevel=2)
        for a, ind in ((1, a1), (2, a2)):
            for name in spec.covariates:
                cols.append(col_of[name] * ind)
                terms.append(Term("interaction", arm=a, name=name))
    else:
        for name in spec.covariates:
            cols.append(col_of[name])
            terms.append(Term("covariate", name=name))
    return DesignMatrix(X=np.column_stack(cols) if cols else np.empty((data.n, 0)),
                        terms=tuple(terms), spec=spec)


def counterfactual_design(design: DesignMatrix, a: int) -> np.ndarray:
    """Design with every subject's arm set to ``a``; covariates untouched.

    For per-arm interaction columns the observed covariate value is
    recovered as the sum of the two arms' columns (the indicators are
    complementary), so no source frame is needed.
    """
    if a not in (1, 2):
        raise ValueError(f"arm must be 1 or 2, got {a!r}")
    X = design.X
    out = np.array(X, dtype=float)  # writable copy
    out[:, 0] = 1.0 if a == 1 else 0.0
    out[:, 1] = 1.0 if a == 2 else 0.0
    inter: dict[str, dict[int, int]] = {}
    for j, t in enumerate(design.terms):
        if t.kind == "interaction":
            inter.setdefault(t.name, {})[t.arm] = j
    for cols in inter.values():
        w = X[:, cols[1]] + X[:, cols[2]]
        out[:, cols[a]] = w
        out[:, cols[1 if a == 2 else 2]] = 0.0
    return out
