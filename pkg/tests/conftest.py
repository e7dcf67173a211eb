import math
from pathlib import Path

import pytest

from pubforge.creativity import CohortFit, CreativityModel

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def toy_model(rates, betas=None, t0=2000, J=10, I_1=None):
    """Build a CreativityModel directly from per-cohort base rates."""
    I_1 = I_1 or len(rates)
    betas = betas or [0.0] * len(rates)
    fits = {
        i: CohortFit(
            i=i, alpha=math.log(rate) if rate > 0 else -745.0, beta=beta,
            alpha_se=0.0, beta_se=0.0, p_value=0.0, mode="glm", cells_used=5,
        )
        for i, (rate, beta) in enumerate(zip(rates, betas), start=1)
    }
    return CreativityModel(
        fits=fits, I_1=I_1, t_grid=tuple(range(t0, t0 + J + 1)), J=J,
        significance_level=0.05,
    )
