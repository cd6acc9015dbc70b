from dataclasses import replace

import pytest

from cldepth.scenarios import run_scenario, scenario_sim1, scenario_sim2

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def noiseless(cfg):
    return cfg.with_overrides(["noise.state_snr_db=off", "noise.vel_noise_var=0"])


@pytest.fixture(scope="session")
def sim1_clean_full():
    return run_scenario(noiseless(scenario_sim1()))


@pytest.fixture(scope="session")
def sim1_clean_reduced():
    return run_scenario(replace(noiseless(scenario_sim1()), observer="reduced_integral"))


@pytest.fixture(scope="session")
def sim1_clean_reduced_diff():
    return run_scenario(replace(noiseless(scenario_sim1()), observer="reduced_differential"))


@pytest.fixture(scope="session")
def sim1_noisy():
    return run_scenario(scenario_sim1())


@pytest.fixture(scope="session")
def sim2_run():
    return run_scenario(scenario_sim2())


@pytest.fixture(scope="session")
def sim2_clean():
    return run_scenario(noiseless(scenario_sim2()))
