"""Compilation command generation for a real builder host.

Simulated workers never run these, but they are exactly what a worker
would execute: install build-time dependencies only (runtime dependencies
are the client's job), then produce the binary package without installing
it. The second stage runs only if the first succeeded.
"""
from __future__ import annotations

from ..core import BuildKey


def generate_emerge_commands(key: BuildKey) -> str:
    target = f"={key.package}-{key.version}"
    flags = key.useflags.render_spaced()
    return (
        f'env USE="{flags}" emerge --onlydeps --onlydeps-with-rdeps n '
        f"{target} && emerge --buildpkgonly {target}"
    )
