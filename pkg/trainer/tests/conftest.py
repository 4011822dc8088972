import shutil
import subprocess
import sys

import numpy as np
import pytest


def primary_cli():
    """The codec executable; the trainer talks to it only through its CLI and files."""
    exe = shutil.which("pvcodec")
    if exe:
        return [exe]
    return [sys.executable, "-m", "pvcodec"]


def run_primary(args, check=True):
    proc = subprocess.run(
        primary_cli() + [str(a) for a in args], capture_output=True, text=True
    )
    if check and proc.returncode != 0:
        raise AssertionError(f"pvcodec {' '.join(map(str, args))} failed:\n{proc.stderr}")
    return proc


def write_xyz(path, pts):
    with open(path, "w") as fh:
        for x, y, z in np.asarray(pts, dtype=float).tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def sphere_points(n, seed, noise=0.01):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = 0.42 + rng.normal(scale=noise, size=(n, 1))
    return 0.5 + v * r


@pytest.fixture(scope="session")
def sample_dump(tmp_path_factory):
    """PVS dump of a small structured cloud, produced by the codec CLI."""
    root = tmp_path_factory.mktemp("dump")
    cloud = root / "cloud.xyz"
    write_xyz(cloud, sphere_points(900, seed=2024))
    pvs = root / "contexts.pvs"
    run_primary(["inspect", cloud, "--dump-contexts", pvs, "-N", "5", "--k", "8"])
    return pvs


@pytest.fixture(scope="session")
def lift_cloud(tmp_path_factory):
    """Denser fixture for the learned-lift acceptance test."""
    root = tmp_path_factory.mktemp("lift")
    cloud = root / "lift.xyz"
    write_xyz(cloud, sphere_points(1800, seed=515))
    pvs = root / "lift.pvs"
    run_primary(["inspect", cloud, "--dump-contexts", pvs, "-N", "5", "--k", "8"])
    return {"cloud": cloud, "pvs": pvs}
