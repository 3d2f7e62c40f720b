import os

import pytest

from psfkit import corpus_path, library_path
from psfkit.linker import flatten
from psfkit.syntax import parse_spec

LIB_FILES = ("clientserver.psf", "architecture.psf")


def load_modules(*files):
    mods = []
    for f in files:
        d = library_path() if f in LIB_FILES else corpus_path()
        with open(os.path.join(d, f), encoding="utf-8") as fh:
            mods.extend(parse_spec(fh.read(), f))
    return mods


def link(*files, root="Application"):
    return flatten(load_modules(*files), root)


@pytest.fixture(scope="session")
def cs_lib():
    return load_modules("clientserver.psf")


@pytest.fixture(scope="session")
def arch_lib():
    return load_modules("architecture.psf")


@pytest.fixture(scope="session")
def sec2_spec():
    return link("architecture.psf", "section2_architecture.psf")


@pytest.fixture(scope="session")
def sec2_target_spec():
    return link("architecture.psf", "section2_architecture.psf", "section2_toolbus.psf",
                root="ToolBusProcesses")


@pytest.fixture(scope="session")
def sec3_cs_spec():
    return link("clientserver.psf", "section3_clientserver.psf")


@pytest.fixture(scope="session")
def sec3_cs_full_spec():
    return link("clientserver.psf", "section3_clientserver_full.psf")
