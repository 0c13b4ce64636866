import functools

import pytest

from igame import SelectionConfig, generate, get_scenario, select_interactive_model


@functools.lru_cache(maxsize=None)
def game(name, seed=0):
    return generate(get_scenario(name), seed)


@functools.lru_cache(maxsize=None)
def ranking(name, seed=0):
    sc = get_scenario(name)
    g = game(name, seed)
    return select_interactive_model(g.trajectory, sc.menu(),
                                    config=SelectionConfig(degree=sc.fit_degree))


@pytest.fixture(scope="session")
def scenario_game():
    return game


@pytest.fixture(scope="session")
def scenario_ranking():
    return ranking


# acceptance outcomes: criterion -> list of (label, ok, detail)
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    def record(criterion, label, ok, detail=""):
        ACCEPTANCE.setdefault(criterion, []).append((label, bool(ok), detail))
        print(f"criterion {criterion} [{label}]: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        rows = ACCEPTANCE[criterion]
        failed = [f"{label}: {detail}" for label, ok, detail in rows if not ok]
        verdict = "PASS" if not failed else "FAIL"
        plural = "s" if len(rows) != 1 else ""
        note = f" ({'; '.join(failed)})" if failed else f" ({len(rows)} check{plural})"
        terminalreporter.write_line(f"criterion {criterion}: {verdict}{note}")
