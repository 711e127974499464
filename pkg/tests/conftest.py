import pytest

from objground.fixture import generate_fixture


@pytest.fixture(scope="session")
def oracle_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("oracle")
    generate_fixture(root, seed=7, n_videos=2, n_instances=3)
    return root


@pytest.fixture(scope="session")
def adversarial_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("adversarial")
    generate_fixture(root, seed=7, n_videos=2, n_instances=3, adversarial=True)
    return root


ACCEPTANCE_LINES = []


@pytest.fixture()
def verdict(request):
    """Record one pass/fail line per acceptance criterion and assert on it."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
