"""psfkit: a workbench for a PSF-style process algebra.

Parses modular specifications, links them into flat process systems,
builds labeled transition systems, checks strong and rooted weak
bisimulation, applies vertical refinement mappings, generates client/server
interface processes, and simulates systems interactively with native
handler bindings.
"""

from importlib import resources


def library_path() -> str:
    """Directory holding the shipped .psf libraries."""
    return str(resources.files(__package__) / "library")


def corpus_path() -> str:
    """Directory holding the shipped example specifications."""
    return str(resources.files(__package__) / "corpus")


__all__ = ["library_path", "corpus_path"]
__version__ = "0.1.0"
