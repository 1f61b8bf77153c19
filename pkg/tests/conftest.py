import numpy as np
import pytest

from regnav.world import Scene, SceneContext, generate_scene_sets


def ascii_scene(rows, objects=(), scene_id=0, object_classes=6):
    """Scene from row strings; row 0 is y=0, so heading 90 points down the list."""
    return Scene.from_dict({"id": scene_id, "width": len(rows[0]), "height": len(rows),
                            "cell_size_m": 0.5, "object_classes": object_classes, "occupancy": list(rows),
                            "objects": [{"class": c, "x": x, "y": y} for c, (x, y) in objects]})


@pytest.fixture(scope="session")
def scene_sets():
    return generate_scene_sets(0)


@pytest.fixture(scope="session")
def contexts(scene_sets):
    return {s.id: SceneContext(s) for split in scene_sets.values() for s in split}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
