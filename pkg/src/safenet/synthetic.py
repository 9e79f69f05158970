"""Synthetic multi-company survey data with tunable cross-company similarity.

Each company draws Likert features by discretizing standard-normal latents
into quintile bins. Labels come from a linear score of the centred Likert
values under company weights = shared weights + a perturbation, plus
optional noise; the highest-scoring rows become the minority (accident)
class. With zero perturbation all companies share one labelling rule, so
knowledge learned on one transfers to another; large perturbations break
that relationship.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pipeline import RawRecord
from .seeding import derive_rng

# standard-normal quintile boundaries, Phi^-1(0.2/0.4/0.6/0.8)
LIKERT_CUTS = np.array(
    [-0.8416212335729143, -0.2533471031357997, 0.2533471031357997, 0.8416212335729143]
)


@dataclass
class CompanySpec:
    n_rows: int
    minority_fraction: float
    weight_perturbation: float = 0.0
    noise_level: float = 0.0
    missing_rate: float = 0.0

    def validate(self) -> None:
        if self.n_rows < 20:
            raise ValueError("n_rows must be at least 20")
        if not 0.0 < self.minority_fraction <= 0.5:
            raise ValueError("minority_fraction must be in (0, 0.5]")
        if round(self.n_rows * self.minority_fraction) < 2:
            raise ValueError("minority_fraction yields fewer than 2 minority rows")
        if self.weight_perturbation < 0 or self.noise_level < 0:
            raise ValueError("perturbation and noise must be non-negative")
        if not 0.0 <= self.missing_rate <= 0.3:
            raise ValueError("missing_rate must lie in [0, 0.3]")


@dataclass
class GeneratorSpec:
    shared_weights_seed: int
    companies: list[CompanySpec] = field(default_factory=list)
    feature_dim: int = 42

    def validate(self) -> None:
        if not self.companies:
            raise ValueError("need at least one company")
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be at least 2")
        for c in self.companies:
            c.validate()


def _discretize(z: np.ndarray) -> np.ndarray:
    """Map standard-normal draws to Likert 1..5 by quintile thresholds."""
    return np.searchsorted(LIKERT_CUTS, z) + 1.0


def generate(spec: GeneratorSpec, seed: int) -> list[list[RawRecord]]:
    """Generate one RawRecord list per company, deterministically from seed.

    Labels are assigned from the discretized features (not the latents) so
    that at noise_level 0 the classes are exactly linearly separable in the
    feature space a model actually sees.
    """
    spec.validate()
    d = spec.feature_dim
    shared = derive_rng(spec.shared_weights_seed, "shared-weights").standard_normal(d)

    companies = []
    for ci, comp in enumerate(spec.companies):
        rng = derive_rng(seed, "company", ci)
        weights = shared + comp.weight_perturbation * rng.standard_normal(d)

        n = comp.n_rows
        latents = rng.standard_normal((n, d))
        likert = _discretize(latents)
        scores = (likert - 3.0) @ weights / np.sqrt(d)
        if comp.noise_level > 0:
            scores = scores + comp.noise_level * rng.standard_normal(n)

        n_minority = int(round(n * comp.minority_fraction))
        order = np.argsort(-scores, kind="stable")
        labels = np.zeros(n, dtype=int)
        labels[order[:n_minority]] = 1

        accident_counts = np.where(labels == 1, rng.integers(1, 4, size=n), 0)
        missing = (
            rng.random((n, d)) < comp.missing_rate
            if comp.missing_rate > 0
            else np.zeros((n, d), dtype=bool)
        )

        records = []
        for i in range(n):
            feats = [
                None if missing[i, j] else float(likert[i, j]) for j in range(d)
            ]
            records.append(
                RawRecord(
                    features=feats,
                    accident_count=int(accident_counts[i]),
                    company_id=ci + 1,
                )
            )
        companies.append(records)
    return companies
