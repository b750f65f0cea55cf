import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--run-e2e",
        action="store_true",
        default=False,
        help="run the multi-hour desk-scale training acceptance test",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-e2e"):
        return
    skip = pytest.mark.skip(reason="needs --run-e2e (multi-hour desk-scale run)")
    for item in items:
        if "e2e" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def e2e_run_dir():
    """Stable on-disk location so an interrupted end-to-end run resumes."""
    from pathlib import Path

    path = Path(__file__).resolve().parent.parent / ".e2e-run"
    path.mkdir(exist_ok=True)
    return path
