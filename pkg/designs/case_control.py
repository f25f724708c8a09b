"""Case-control designs on a binary outcome (true or surrogate)"""

import numpy as np

from helper.errors import InfeasibleBudget
from helper.models import StrataAssignment, StratifiedDesign


def case_control(outcome: np.ndarray, n: int) -> StratifiedDesign:
    """
    Two strata, controls (index 0) and cases (index 1).

    Takes min(n // 2, #cases) cases and fills the rest with controls; if
    the controls run out the remainder goes back to the cases.
    """
    y = np.asarray(outcome).astype(np.int64)
    N = y.shape[0]
    if n > N:
        raise InfeasibleBudget(f"Budget {n} exceeds population size {N}")
    if n < 2:
        raise InfeasibleBudget("Case-control needs a budget of at least 2")

    cases = int(y.sum())
    controls = N - cases
    if cases == 0 or controls == 0:
        raise InfeasibleBudget("Case-control needs at least one case and one control")

    n_case = min(n // 2, cases)
    n_control = n - n_case
    if n_control > controls:
        n_case += n_control - controls
        n_control = controls

    strata = StrataAssignment(
        stratum_of=y.copy(),
        counts=np.array([controls, cases], dtype=np.int64),
        labels=[(0, ()), (1, ())],
    )
    return StratifiedDesign(strata=strata, allocation=np.array([n_control, n_case]))
