"""Named mixed continuous/discrete columns shared by the search, SEM and
prediction stages."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ValidationError


class Kind(enum.Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


@dataclass(frozen=True, eq=False)
class MixedDataset:
    columns: dict
    kinds: dict

    def __post_init__(self):
        if set(self.columns) != set(self.kinds):
            raise ValidationError("every column needs a kind")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValidationError("columns differ in length")
        cols = {}
        for name, values in self.columns.items():
            kind = self.kinds[name]
            if kind is Kind.DISCRETE:
                arr = np.asarray(values)
                if not np.all(np.isfinite(arr.astype(np.float64))):
                    raise ValidationError(f"{name}: missing values")
                if np.any(arr.astype(np.float64) != np.round(arr.astype(np.float64))):
                    raise ValidationError(f"{name}: discrete column must hold integer categories")
                arr = arr.astype(np.int64)
                if np.unique(arr).size < 2:
                    raise ValidationError(f"{name}: discrete column needs at least 2 observed categories")
            else:
                arr = np.asarray(values, dtype=np.float64)
                if not np.all(np.isfinite(arr)):
                    raise ValidationError(f"{name}: missing or non-finite values")
                if arr.size > 1 and not arr.var() > 0:
                    raise ValidationError(f"{name}: continuous column has zero variance")
            arr.setflags(write=False)
            cols[name] = arr
        object.__setattr__(self, "columns", cols)

    @classmethod
    def from_arrays(cls, continuous=None, discrete=None, order=None):
        continuous = dict(continuous or {})
        discrete = dict(discrete or {})
        names = list(order) if order else list(continuous) + list(discrete)
        cols = {n: continuous[n] if n in continuous else discrete[n] for n in names}
        kinds = {n: Kind.CONTINUOUS if n in continuous else Kind.DISCRETE for n in names}
        return cls(cols, kinds)

    @property
    def names(self):
        return tuple(self.columns)

    @property
    def n(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def is_discrete(self, name):
        return self.kinds[name] is Kind.DISCRETE

    def matrix(self, names):
        return np.column_stack([np.asarray(self.columns[c], dtype=np.float64) for c in names])

    def subset(self, names):
        names = list(names)
        return MixedDataset({c: self.columns[c] for c in names}, {c: self.kinds[c] for c in names})

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        names = self.names
        w.writerow(names)
        for i in range(self.n):
            w.writerow([
                str(int(self.columns[c][i])) if self.is_discrete(c) else repr(float(self.columns[c][i]))
                for c in names
            ])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str, discrete=(), columns=None):
        """Read a CSV table; ``discrete`` names the categorical columns and
        ``columns`` optionally selects a subset (others are ignored)."""
        reader = csv.reader(io.StringIO(text))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty table") from None
        wanted = list(columns) if columns else header
        missing = [c for c in wanted if c not in header]
        if missing:
            raise ParseError(f"missing columns: {', '.join(missing)}", line=1)
        idx = [header.index(c) for c in wanted]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[j]) for j in idx])
            except (ValueError, IndexError):
                raise ParseError(f"bad numeric row {row!r}", line=lineno) from None
        arr = np.asarray(rows, dtype=np.float64).reshape(-1, len(wanted))
        discrete = set(discrete)
        cols = {c: arr[:, j] for j, c in enumerate(wanted)}
        kinds = {c: Kind.DISCRETE if c in discrete else Kind.CONTINUOUS for c in wanted}
        return cls(cols, kinds)
