"""Per-feature actionability constraints for counterfactual search.

Actions restrict the direction of change in feature space; ranges bound the
final counterfactual values in original units. Monotone directions are
enforced by reparametrizing base-shift components through softplus, which
survives scaling by the (positive) per-instance magnitudes. Ranges are
enforced by clamping counterfactual rows into the standardized image of
[lo, hi] inside the optimization graph (projected gradient) and once more on
the returned solution.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..exceptions import ConfigError

ACTIONS = ("free", "frozen", "increase_only", "decrease_only")


@dataclass
class FeatureConstraint:
    action: str = "free"
    lower: float = -np.inf
    upper: float = np.inf

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ConfigError(f"unknown constraint action {self.action!r}")
        if self.lower > self.upper:
            raise ConfigError(
                f"constraint range [{self.lower}, {self.upper}] is empty"
            )


class ConstraintSet:
    """Constraints for every feature, aligned with a feature-name list."""

    def __init__(self, feature_names, per_feature=None):
        self.feature_names = list(feature_names)
        if per_feature is None:
            per_feature = {}
        unknown = set(per_feature) - set(self.feature_names)
        if unknown:
            raise ConfigError(f"constraints name unknown features {sorted(unknown)}")
        self.constraints = [
            per_feature.get(name, FeatureConstraint()) for name in self.feature_names
        ]
        actions = np.array([c.action for c in self.constraints])
        self._free = (actions == "free").astype(np.float64)
        self._inc = (actions == "increase_only").astype(np.float64)
        self._dec = (actions == "decrease_only").astype(np.float64)
        self._frozen = (actions == "frozen")
        self.lower = np.array([c.lower for c in self.constraints])
        self.upper = np.array([c.upper for c in self.constraints])

    @classmethod
    def from_file(cls, path, feature_names):
        """Parse `name, action, lo, hi` lines; unlisted features are frozen.

        Empty lo/hi cells mean unbounded on that side.
        """
        per_feature = {}
        with open(path, encoding="utf-8", newline="") as fh:
            for line_no, row in enumerate(csv.reader(fh), start=1):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if row[0].lstrip().startswith("#"):
                    continue
                if len(row) != 4:
                    raise ConfigError(
                        f"{path}: line {line_no} must be 'name, action, lo, hi'"
                    )
                name, action, lo, hi = (cell.strip() for cell in row)
                try:
                    lower = float(lo) if lo else -np.inf
                    upper = float(hi) if hi else np.inf
                except ValueError:
                    raise ConfigError(
                        f"{path}: line {line_no} has non-numeric bounds"
                    ) from None
                per_feature[name] = FeatureConstraint(action, lower, upper)
        listed = set(per_feature)
        for name in feature_names:
            if name not in listed:
                per_feature[name] = FeatureConstraint("frozen")
        return cls(feature_names, per_feature)

    # ------------------------------------------------------------------
    @property
    def trivial(self):
        """True when every feature is free and unbounded."""
        return (
            self._free.all()
            and not np.isfinite(self.lower).any()
            and not np.isfinite(self.upper).any()
        )

    @property
    def has_box(self):
        return np.isfinite(self.lower).any() or np.isfinite(self.upper).any()

    @property
    def frozen_mask(self):
        return self._frozen

    def materialize_t(self, raw):
        """Map raw parameters to constrained base-shift components.

        free -> u, increase_only -> softplus(u), decrease_only -> -softplus(u),
        frozen -> exactly zero.
        """
        if self._free.all():
            return raw
        sp = ad.softplus(raw)
        out = ad.mul(raw, ad.Tensor(self._free))
        out = ad.add(out, ad.mul(sp, ad.Tensor(self._inc)))
        out = ad.sub(out, ad.mul(sp, ad.Tensor(self._dec)))
        return out

    def standardized_box(self, scaler):
        if not self.has_box:
            return None
        if scaler is None:
            raise ConfigError(
                "range constraints need the dataset scaler to map bounds "
                "into standardized space"
            )
        with np.errstate(invalid="ignore"):
            lo = (self.lower - scaler.mean_) / scaler.std_
            hi = (self.upper - scaler.mean_) / scaler.std_
        return lo, hi

    def infeasible_rows(self, X_std, box):
        """Per-instance error records for rows outside their own range."""
        if box is None:
            return []
        lo, hi = box
        records = []
        bad = (X_std < lo) | (X_std > hi)
        for i in np.nonzero(bad.any(axis=1))[0]:
            cols = [self.feature_names[j] for j in np.nonzero(bad[i])[0]]
            records.append((int(i), f"instance outside its allowed range on {cols}"))
        return records
