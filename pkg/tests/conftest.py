import os

import pytest

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def dataset_dir(name: str):
    """Locate a benchmark dataset directory, checking FGGSL_DATA then datasets/.

    Returns None when the dataset is not mounted; data-dependent tests
    skip in that case (see README for the expected file layout).
    """
    candidates = []
    env = os.environ.get("FGGSL_DATA")
    if env:
        candidates.append(os.path.join(env, name))
    candidates.append(os.path.join(REPO_ROOT, "datasets", name))
    for path in candidates:
        if os.path.isfile(os.path.join(path, "nodes.tsv")):
            return path
    return None


def require_dataset(name: str) -> str:
    path = dataset_dir(name)
    if path is None:
        pytest.skip(
            f"{name} dataset files not present (set FGGSL_DATA or place "
            f"nodes.tsv/edges.tsv/splits under datasets/{name}); this "
            "environment has no network access to fetch them")
    return path
