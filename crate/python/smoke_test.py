"""Smoke test for the hqsvt_py extension.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import math

import hqsvt_py as h

A = [[0.5, 0.1 + 0.1j], [0.0, 0.3]]
PSI = [0.6, 0.8j]


def main():
    f = h.TargetFunction("identity", sigma_lo=0.1, sigma_hi=0.9)
    assert abs(f(0.5) - 0.5) < 1e-15

    schedule, report = h.synthesize(f, eps=1e-2, seed=1)
    assert report.converged, report
    print(schedule, report)

    again = h.PhaseSchedule.from_text(schedule.to_text())
    assert again.phases == schedule.phases and again.frame_phase == schedule.frame_phase

    v = h.verify(A, schedule, f, 1e-2)
    assert v["passed"], v
    u = h.simulate(A, schedule)
    assert h.op_distance(u, h.target_unitary(A, f)) == v["distance"]

    state, p = h.apply_matrix(A, PSI)
    expected = abs(0.22 + 0.08j) ** 2 + 0.24**2
    assert abs(p - expected) < 1e-12

    registers = h.power_cascade(A, PSI, 3)
    assert abs(sum(abs(z) ** 2 for r in registers for z in r) - 1) < 1e-10

    (y,) = h.ode_solve([[-1.0]], [1.0], 0.01, 100)
    assert abs(y - 0.99**100) < 1e-13 and abs(y.real - math.exp(-1)) < 2e-3

    history, p, kappa = h.history_state(A, PSI, 2)
    assert len(history) == 3 and 0 < p <= 1 and kappa >= 1

    rows = h.noise_sweep(A, schedule, [0.0, 1e-3], trials=20)
    assert rows[0][1] == 0.0 and rows[1][1] > 0.0

    try:
        h.history_state([[1.0]], [1.0], 2)
    except h.HsvtException as e:
        print("rejected:", e)
    else:
        raise AssertionError("sigma = 1 must be rejected")

    print("smoke test passed")


if __name__ == "__main__":
    main()
