"""Shared fixtures. The long preset runs are computed once per session
and reused by the unit, property and acceptance modules."""

import pytest

from cochleasim import cli, presets, solver

FIGURE_NAMES = ("fig1-passive", "fig1-active", "fig2-passive", "fig2-active")


def run_preset(name):
    pre = presets.preset(name)
    state = None
    if pre.kick > 0:
        state = presets.kick_state(pre.grid.n, pre.kick)
    return solver.simulate(pre.params, pre.grid,
                           sample_every=pre.sample_every,
                           initial_state=state)


@pytest.fixture(scope="session")
def figure_traces():
    return {name: run_preset(name) for name in FIGURE_NAMES}


@pytest.fixture(scope="session")
def emission_traces():
    return {name: run_preset(name)
            for name in ("otoacoustic", "otoacoustic-twin")}


@pytest.fixture(scope="session")
def convergence_results():
    """Full-vs-reduced norm ladders for both fig1 variants at t_final=50."""
    out = {}
    for variant in ("passive", "active"):
        pre = presets.preset(f"fig1-{variant}")
        cfg = cli.config_from_preset(pre)
        cfg["grid"]["t_final"] = presets.CONVERGENCE_T_FINAL
        cfg = cli.resolve_config(cfg)
        out[variant] = cli.converge_once(cfg, presets.CONVERGENCE_DELTAS,
                                         workers=4)
    return out


@pytest.fixture(scope="session")
def oracle_checks():
    return cli.oracle_battery()
