import logging
import math
import textwrap

import numpy as np
import pytest

from aloha_connectivity import cli
from aloha_connectivity.pointprocess import Boundary, NetworkConfig, point_set_from_positions

LOGGER = logging.getLogger(__name__)

TEST_SEED = 20240611


@pytest.fixture(scope='function')
def stream():
    """Fresh numpy Generator with a fixed seed for every test."""
    return np.random.default_rng(TEST_SEED)


@pytest.fixture(scope='session')
def torus_config():
    """Small torus network with finite link range, used by degree and propagation checks."""
    return NetworkConfig(lam=1.0, p=0.2, beta=1.2, eta=1.0, window_half=10.0, boundary=Boundary.TORUS, seed=7)


@pytest.fixture(scope='session')
def interference_config():
    """Interference-limited (eta = inf) torus network for the connection-time estimators."""
    return NetworkConfig(lam=1.0, p=0.125, beta=2.0, eta=math.inf, window_half=8.0, boundary=Boundary.TORUS,
                         seed=11, max_slots=4000)


@pytest.fixture(scope='function')
def random_points():
    """
    Factory for uniformly scattered point sets.

    Parameters
    ----------
    count: int
        Number of points
    window_half: float, optional
        Half side of the window
    boundary: Boundary, optional
        Distance convention
    seed: int, optional
        Seed of the coordinates
    cell_size: float, optional
        Grid cell size, defaults to the point set builder's choice

    Returns
    -------
    PointSet
    """
    def make(count, window_half=5.0, boundary=Boundary.WINDOW, seed=0, cell_size=None):
        rng = np.random.default_rng(seed)
        positions = rng.uniform(-window_half, window_half, size=(count, 2))
        return point_set_from_positions(positions, window_half, boundary, cell_size=cell_size)
    return make


class TrackedExperiment(object):
    """Wrapper that writes experiment files into a scratch directory and runs
    them through the command line entry point.

    Parameters
    ----------
    directory: pathlib.Path
        Scratch directory holding the experiment files and the artifacts
    """

    def __init__(self, directory):
        self.directory = directory
        self.files = []

    def write(self, text, name="experiment.ini"):
        """Writes a dedented experiment file and returns its path.

        Parameters
        ----------
        text: str
            File contents, leading indentation is removed
        name: str, optional
            File name inside the scratch directory

        Returns
        -------
        pathlib.Path
        """
        path = self.directory / name
        path.write_text(textwrap.dedent(text))
        self.files.append(path)
        return path

    def run(self, *args, out="out"):
        """Runs ``aloha-connectivity run`` on the given arguments.

        Parameters
        ----------
        *args: str
            Arguments after ``run`` (the config path first)
        out: str, optional
            Artifact directory name inside the scratch directory, None to omit --out

        Returns
        -------
        int
            Exit status of the command
        """
        argv = ["run", *map(str, args)]
        if out is not None:
            argv += ["--out", str(self.directory / out)]
        LOGGER.info(f"Running aloha-connectivity {' '.join(argv)} ...")
        return cli.main(argv)

    def artifact(self, name, out="out"):
        return self.directory / out / name


@pytest.fixture(scope='function')
def experiment(tmp_path):
    """Scratch experiment directory, artifacts are removed with tmp_path."""
    tracked = TrackedExperiment(tmp_path)
    yield tracked
    LOGGER.debug(f"Experiment files written: {[p.name for p in tracked.files]}")
