"""Runtime-dependency closure, install ordering and orphan computation.

Resolution accumulates every atom seen for a package (targets plus atoms
arising from chosen versions' dependency lists) and re-walks from the
targets until the constraint set is stable. All atoms on a package must be
satisfied by a single version; an empty intersection is a hard error
rather than a silent latest-wins pick. Install order is a topological
order of the dependency graph; strongly connected components are broken
deterministically, smallest canonical package string first.

Packages already installed at a satisfying version are skipped, never
upgraded implicitly; explicitly named targets are always planned, which is
what makes reinstalls and upgrades possible.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

from .core import (
    DependencyAtom,
    PackageId,
    UseFlagSet,
    Version,
    atom_matches,
)
from .depparse import eval_use_conditionals, parse_dep_string
from .errors import (
    ConflictingAtoms,
    MissingPackage,
    NoMatchingVersion,
    NotInstalled,
    StillRequired,
)
from .localdb import PackageMetadata

_MAX_PASSES = 1000


class MetadataSource(Protocol):
    def get_metadata(self, package: PackageId) -> PackageMetadata | None: ...


@dataclass(frozen=True)
class InstallPlan:
    """An ordered install plan over a dependency closure.

    ``steps`` lists each package exactly once, dependencies before
    dependents except within a declared cycle group. ``dependencies`` maps
    each planned package to its direct evaluated runtime dependencies,
    including ones satisfied by already-installed packages.
    """

    steps: tuple[tuple[PackageId, Version], ...]
    skipped_installed: frozenset[PackageId] = frozenset()
    dependencies: dict[PackageId, tuple[PackageId, ...]] = field(
        default_factory=dict
    )
    cycle_groups: tuple[frozenset[PackageId], ...] = ()

    def serialize(self) -> str:
        return json.dumps(
            {
                "steps": [[p.render(), v.render()] for p, v in self.steps],
                "skipped_installed": sorted(
                    p.render() for p in self.skipped_installed
                ),
                "dependencies": {
                    p.render(): [d.render() for d in deps]
                    for p, deps in sorted(
                        self.dependencies.items(), key=lambda kv: kv[0].render()
                    )
                },
                "cycle_groups": [
                    sorted(p.render() for p in group)
                    for group in self.cycle_groups
                ],
            },
            sort_keys=True,
        )


def resolve_runtime_closure(
    targets: Sequence[DependencyAtom],
    db: MetadataSource,
    flags: UseFlagSet,
) -> InstallPlan:
    """Expand runtime dependencies of the targets into an install plan."""
    target_pkgs = {a.package for a in targets}
    accumulated: dict[PackageId, list[DependencyAtom]] = {}

    for _ in range(_MAX_PASSES):
        walk = _ClosureWalk(db, flags, target_pkgs, accumulated)
        walk.run(targets)
        if walk.is_stable():
            return _plan_from_walk(walk)
        for pkg, atoms in walk.found.items():
            merged = accumulated.setdefault(pkg, [])
            for atom in atoms:
                if atom not in merged:
                    merged.append(atom)
    raise RuntimeError("dependency resolution did not converge")


class _ClosureWalk:
    """One depth-first pass from the targets under the known constraints."""

    def __init__(
        self,
        db: MetadataSource,
        flags: UseFlagSet,
        target_pkgs: set[PackageId],
        accumulated: dict[PackageId, list[DependencyAtom]],
    ):
        self.db = db
        self.flags = flags
        self.target_pkgs = target_pkgs
        self.accumulated = accumulated
        self.found: dict[PackageId, list[DependencyAtom]] = {}
        self.chosen: dict[PackageId, Version] = {}
        self.skipped: set[PackageId] = set()
        self.edges: dict[PackageId, list[PackageId]] = {}
        self.dep_map: dict[PackageId, list[PackageId]] = {}
        self._visited: set[PackageId] = set()

    def run(self, targets: Sequence[DependencyAtom]) -> None:
        for atom in targets:
            self._require_known(atom)
            self._note(atom)
        for atom in targets:
            self._visit(atom.package)

    def is_stable(self) -> bool:
        return all(
            atom in self.accumulated.get(pkg, [])
            for pkg, atoms in self.found.items()
            for atom in atoms
        )

    def _require_known(self, atom: DependencyAtom) -> PackageMetadata:
        meta = self.db.get_metadata(atom.package)
        if meta is None:
            raise MissingPackage(f"{atom} names unknown package {atom.package}")
        return meta

    def _note(self, atom: DependencyAtom) -> None:
        atoms = self.found.setdefault(atom.package, [])
        if atom not in atoms:
            atoms.append(atom)

    def _constraints(self, pkg: PackageId) -> list[DependencyAtom]:
        atoms: list[DependencyAtom] = []
        for atom in self.accumulated.get(pkg, []) + self.found.get(pkg, []):
            if atom not in atoms:
                atoms.append(atom)
        return atoms

    def _visit(self, pkg: PackageId) -> None:
        if pkg in self._visited:
            return
        self._visited.add(pkg)
        meta = self.db.get_metadata(pkg)
        assert meta is not None
        atoms = self._constraints(pkg)
        available = meta.known_versions()
        viable = [
            v for v in available if all(atom_matches(a, v) for a in atoms)
        ]
        if not viable:
            for atom in atoms:
                if not any(atom_matches(atom, v) for v in available):
                    raise NoMatchingVersion(
                        f"{atom}: no match among "
                        f"{', '.join(str(v) for v in available)}"
                    )
            raise ConflictingAtoms(
                f"{pkg}: no single version satisfies "
                f"{', '.join(str(a) for a in atoms)}"
            )
        if pkg not in self.target_pkgs and meta.installed is not None:
            inst = meta.installed_version()
            assert inst is not None
            if all(atom_matches(a, inst) for a in atoms):
                self.skipped.add(pkg)
                return
            raise ConflictingAtoms(
                f"{pkg}: installed version {inst} does not satisfy "
                f"{', '.join(str(a) for a in atoms)} and implicit upgrades "
                f"are not performed"
            )
        version = max(viable, key=Version.sort_key)
        self.chosen[pkg] = version
        dep_atoms: list[DependencyAtom] = []
        for dep_string in meta.versions[version.render()].dependencies:
            dep_atoms.extend(
                eval_use_conditionals(parse_dep_string(dep_string), self.flags)
            )
        edge_list = self.edges.setdefault(pkg, [])
        deps = self.dep_map.setdefault(pkg, [])
        for atom in dep_atoms:
            dep_pkg = atom.package
            if dep_pkg == pkg:
                continue
            self._require_known(atom)
            self._note(atom)
            if dep_pkg not in edge_list:
                edge_list.append(dep_pkg)
            if dep_pkg not in deps:
                deps.append(dep_pkg)
            self._visit(dep_pkg)


def _plan_from_walk(walk: _ClosureWalk) -> InstallPlan:
    planned = set(walk.chosen)
    edges = {
        pkg: [d for d in deps if d in planned]
        for pkg, deps in walk.edges.items()
    }
    components = ordered_components(sorted(planned), edges)
    steps = tuple(
        (pkg, walk.chosen[pkg])
        for component in components
        for pkg in component
    )
    cycles = tuple(
        frozenset(component) for component in components if len(component) > 1
    )
    return InstallPlan(
        steps=steps,
        skipped_installed=frozenset(walk.skipped),
        dependencies={
            pkg: tuple(deps) for pkg, deps in walk.dep_map.items()
        },
        cycle_groups=cycles,
    )


def ordered_components(
    nodes: Sequence[PackageId], edges: dict[PackageId, list[PackageId]]
) -> list[list[PackageId]]:
    """Strongly connected components in pointee-first order.

    A component is emitted only after every component it points to; ties
    and members within a component are ordered by canonical package
    string, which makes the whole order deterministic.
    """
    sccs = _tarjan(nodes, edges)
    comp_of = {pkg: i for i, scc in enumerate(sccs) for pkg in scc}
    out_deps: list[set[int]] = [set() for _ in sccs]
    dependents: list[set[int]] = [set() for _ in sccs]
    for pkg in nodes:
        for dep in edges.get(pkg, []):
            a, b = comp_of[pkg], comp_of[dep]
            if a != b:
                out_deps[a].add(b)
                dependents[b].add(a)
    remaining = {i: len(out_deps[i]) for i in range(len(sccs))}
    key = {i: min(p.render() for p in scc) for i, scc in enumerate(sccs)}
    ready = [(key[i], i) for i, n in remaining.items() if n == 0]
    heapq.heapify(ready)
    ordered: list[list[PackageId]] = []
    while ready:
        _, i = heapq.heappop(ready)
        ordered.append(sorted(sccs[i], key=PackageId.render))
        for dependent in dependents[i]:
            remaining[dependent] -= 1
            if remaining[dependent] == 0:
                heapq.heappush(ready, (key[dependent], dependent))
    return ordered


def _tarjan(
    nodes: Sequence[PackageId], edges: dict[PackageId, list[PackageId]]
) -> list[list[PackageId]]:
    index: dict[PackageId, int] = {}
    lowlink: dict[PackageId, int] = {}
    on_stack: set[PackageId] = set()
    stack: list[PackageId] = []
    counter = 0
    sccs: list[list[PackageId]] = []

    def strongconnect(v: PackageId) -> None:
        nonlocal counter
        index[v] = lowlink[v] = counter
        counter += 1
        stack.append(v)
        on_stack.add(v)
        for w in edges.get(v, []):
            if w not in index:
                strongconnect(w)
                lowlink[v] = min(lowlink[v], lowlink[w])
            elif w in on_stack:
                lowlink[v] = min(lowlink[v], index[w])
        if lowlink[v] == index[v]:
            scc = []
            while True:
                w = stack.pop()
                on_stack.remove(w)
                scc.append(w)
                if w == v:
                    break
            sccs.append(scc)

    for node in nodes:
        if node not in index:
            strongconnect(node)
    return sccs


def compute_orphans(
    db: "OrphanSource", roots: Iterable[PackageId]
) -> list[PackageId]:
    """Removal list for the roots plus their now-unneeded dependencies.

    Only dependency-installed packages reachable from the removal set are
    swept in, and only once nothing outside the set requires them;
    explicitly installed packages are never auto-removed. The result is
    ordered dependents before dependencies.
    """
    root_list: list[PackageId] = []
    for pkg in roots:
        if pkg not in root_list:
            root_list.append(pkg)
    metas: dict[PackageId, PackageMetadata] = {
        m.name: m for m in db.iter_packages() if m.installed is not None
    }
    for pkg in root_list:
        if pkg not in metas:
            raise NotInstalled(f"{pkg} is not installed")
    removal: set[PackageId] = set(root_list)
    changed = True
    while changed:
        changed = False
        for pkg in sorted(metas, key=PackageId.render):
            if pkg in removal:
                continue
            meta = metas[pkg]
            if meta.explicit:
                continue
            requirers = set(meta.required_by)
            if requirers and requirers <= removal:
                removal.add(pkg)
                changed = True
    for pkg in root_list:
        outside = set(metas[pkg].required_by) - removal
        if outside:
            raise StillRequired(
                f"{pkg} is still required by "
                f"{', '.join(sorted(p.render() for p in outside))}"
            )
    # Dependents first: each member points at its in-set requirers, so the
    # pointee-first component order emits requirers before the required.
    edges = {
        pkg: sorted(
            (r for r in metas[pkg].required_by if r in removal),
            key=PackageId.render,
        )
        for pkg in removal
    }
    components = ordered_components(sorted(removal), edges)
    return [pkg for component in components for pkg in component]


class OrphanSource(Protocol):
    def iter_packages(self) -> Iterable[PackageMetadata]: ...
