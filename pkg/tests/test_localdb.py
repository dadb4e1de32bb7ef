import json

import pytest

from conftest import NCURSES_VERSIONS, build_sample_metadata
from pacloud.core import BuildKey, PackageId, UseFlagSet, parse_version
from pacloud.errors import (
    MalformedManifest,
    NotInstalled,
    StoreUnreachable,
    UnknownPackage,
    UnknownVersion,
)
from pacloud.localdb import (
    DirectoryStore,
    LocalDb,
    parse_manifest,
    write_store,
)


def pkg(text):
    return PackageId.parse(text)


def tree_snapshot(root):
    """Relative path -> bytes for every file under root."""
    return {
        str(path.relative_to(root)): path.read_bytes()
        for path in sorted(root.rglob("*"))
        if path.is_file()
    }


class FailingStore:
    def fetch_manifest(self):
        raise StoreUnreachable("backend down")

    def fetch_category(self, category):
        raise StoreUnreachable("backend down")

    def fetch_artifact(self, url):
        raise StoreUnreachable("backend down")


class TestManifest:
    def test_parse(self):
        assert parse_manifest("sys-libs\napp-editors\n") == [
            "sys-libs",
            "app-editors",
        ]

    def test_blank_line_rejected(self):
        with pytest.raises(MalformedManifest):
            parse_manifest("sys-libs\n\napp-editors\n")

    def test_duplicate_rejected(self):
        with pytest.raises(MalformedManifest):
            parse_manifest("sys-libs\nsys-libs\n")


class TestSync:
    def test_fresh_sync_creates_categories(self, db, store_dir):
        report = db.sync(DirectoryStore(store_dir))
        assert report.categories_synced == 3  # sys-libs, app-editors, sys-apps
        assert report.packages_added == 4
        assert report.packages_updated == 0
        assert (db.root / "sys-libs" / "ncurses" / "metadata.json").is_file()
        assert (db.root / "app-editors" / "vim" / "metadata.json").is_file()

    def test_sync_idempotent_and_byte_identical(self, db, store_dir):
        store = DirectoryStore(store_dir)
        db.sync(store)
        first = tree_snapshot(db.root)
        report = db.sync(store)
        assert report.packages_unchanged == 4
        assert report.packages_added == report.packages_updated == 0
        assert tree_snapshot(db.root) == first

    def test_local_fields_survive_resync(self, db, store_dir):
        store = DirectoryStore(store_dir)
        db.sync(store)
        ncurses = pkg("sys-libs/ncurses")
        db.record_install(
            ncurses, parse_version("6.1-r2"), True, [], ["usr/lib/libncurses.so"]
        )
        db.sync(store)
        meta = db.get_metadata(ncurses)
        assert meta.installed == "6.1-r2"
        assert meta.explicit is True
        assert meta.files == ["usr/lib/libncurses.so"]

    def test_required_by_survives_resync(self, db, store_dir):
        store = DirectoryStore(store_dir)
        db.sync(store)
        db.record_install(
            pkg("sys-libs/ncurses"), parse_version("6.1-r2"), False, [], []
        )
        db.record_install(
            pkg("app-editors/vim"),
            parse_version("8.1"),
            True,
            [pkg("sys-libs/ncurses")],
            [],
        )
        db.sync(store)
        meta = db.get_metadata(pkg("sys-libs/ncurses"))
        assert meta.required_by == [pkg("app-editors/vim")]

    def test_unreachable_store_leaves_db_untouched(self, db):
        with pytest.raises(StoreUnreachable):
            db.sync(FailingStore())
        assert not db.root.exists() or not any(db.root.rglob("metadata.json"))

    def test_malformed_category_skipped_and_reported(self, db, store_dir):
        (store_dir / "sys-libs.json").write_text("{not json", encoding="utf-8")
        report = db.sync(DirectoryStore(store_dir))
        assert [c for c, _ in report.skipped_categories] == ["sys-libs"]
        assert report.categories_synced == 2
        assert not (db.root / "sys-libs").exists()

    def test_remote_wins_for_descriptions(self, db, store_dir, tmp_path):
        db.sync(DirectoryStore(store_dir))
        metas = build_sample_metadata()
        for meta in metas:
            if meta.name.render() == "sys-libs/ncurses":
                meta.description = "newer words"
        other = tmp_path / "store2"
        write_store(other, metas)
        report = db.sync(DirectoryStore(other))
        assert report.packages_updated == 1
        assert db.get_metadata(pkg("sys-libs/ncurses")).description == "newer words"


class TestSearch:
    def test_search_lists_versions_ascending_with_installed(self, db, store_dir):
        db.sync(DirectoryStore(store_dir))
        db.record_install(
            pkg("sys-libs/ncurses"), parse_version("6.1-r2"), True, [], []
        )
        results = db.search("ncurses")
        assert len(results) == 1
        result = results[0]
        assert result.package == pkg("sys-libs/ncurses")
        assert [str(v) for v in result.versions] == NCURSES_VERSIONS
        assert str(result.installed) == "6.1-r2"
        assert result.description == "console display library"

    def test_no_match(self, db, store_dir):
        db.sync(DirectoryStore(store_dir))
        assert db.search("zzzz-no-such") == []

    def test_category_substring_matches(self, db, store_dir):
        db.sync(DirectoryStore(store_dir))
        results = db.search("app-editors")
        assert [r.package.render() for r in results] == [
            "app-editors/vim",
            "app-editors/vim-core",
        ]

    def test_case_insensitive(self, db, store_dir):
        db.sync(DirectoryStore(store_dir))
        assert len(db.search("NCuRSes")) == 1

    def test_results_in_canonical_string_order(self, db, tmp_path):
        # '-' sorts before '/', so app-x/pkg must come before app/zzz even
        # though directory iteration visits the "app" category first
        from pacloud.localdb import PackageMetadata, VersionInfo

        metas = [
            PackageMetadata(
                name=pkg(name),
                description="d",
                versions={"1.0": VersionInfo()},
            )
            for name in ("app/zzz", "app-x/pkg")
        ]
        store = tmp_path / "ordering-store"
        write_store(store, metas)
        db.sync(DirectoryStore(store))
        results = db.search("p")
        assert [r.package.render() for r in results] == ["app-x/pkg", "app/zzz"]


class TestInstallState:
    @pytest.fixture(autouse=True)
    def synced(self, db, store_dir):
        db.sync(DirectoryStore(store_dir))
        self.db = db
        self.ncurses = pkg("sys-libs/ncurses")
        self.vim = pkg("app-editors/vim")

    def test_record_install_updates_required_by(self):
        self.db.record_install(self.ncurses, parse_version("6.1-r2"), False, [], [])
        self.db.record_install(
            self.vim, parse_version("8.1"), True, [self.ncurses], ["usr/bin/vim"]
        )
        meta = self.db.get_metadata(self.ncurses)
        assert meta.required_by == [self.vim]
        vim_meta = self.db.get_metadata(self.vim)
        assert vim_meta.installed == "8.1"
        assert vim_meta.explicit is True
        assert vim_meta.files == ["usr/bin/vim"]

    def test_record_install_idempotent(self):
        self.db.record_install(self.ncurses, parse_version("6.1-r2"), False, [], [])
        for _ in range(2):
            self.db.record_install(
                self.vim, parse_version("8.1"), True, [self.ncurses], []
            )
        assert self.db.get_metadata(self.ncurses).required_by == [self.vim]

    def test_reinstall_with_changed_deps_drops_stale_required_by(self):
        acl = pkg("sys-apps/acl")
        self.db.record_install(self.ncurses, parse_version("6.1-r2"), False, [], [])
        self.db.record_install(acl, parse_version("2.2.53"), False, [], [])
        self.db.record_install(
            self.vim, parse_version("8.1"), True, [self.ncurses], []
        )
        self.db.record_install(self.vim, parse_version("8.1"), True, [acl], [])
        assert self.db.get_metadata(self.ncurses).required_by == []
        assert self.db.get_metadata(acl).required_by == [self.vim]
        assert self.db.validate() == []

    def test_unknown_version(self):
        with pytest.raises(UnknownVersion):
            self.db.record_install(self.ncurses, parse_version("9.9"), True, [], [])

    def test_unknown_package(self):
        with pytest.raises(UnknownPackage):
            self.db.record_install(
                pkg("cat/ghost"), parse_version("1.0"), True, [], []
            )

    def test_unknown_dependency(self):
        with pytest.raises(UnknownPackage):
            self.db.record_install(
                self.vim, parse_version("8.1"), True, [pkg("cat/ghost")], []
            )

    def test_removal_round_trip_restores_bytes(self):
        before = tree_snapshot(self.db.root)
        self.db.record_install(self.ncurses, parse_version("6.1-r2"), False, [], [])
        self.db.record_install(
            self.vim, parse_version("8.1"), True, [self.ncurses], []
        )
        self.db.record_removal(self.vim)
        self.db.record_removal(self.ncurses)
        assert tree_snapshot(self.db.root) == before

    def test_remove_twice_fails(self):
        self.db.record_install(self.ncurses, parse_version("6.1-r2"), True, [], [])
        self.db.record_removal(self.ncurses)
        with pytest.raises(NotInstalled):
            self.db.record_removal(self.ncurses)

    def test_validate_clean_tree(self):
        self.db.record_install(self.ncurses, parse_version("6.1-r2"), False, [], [])
        self.db.record_install(
            self.vim, parse_version("8.1"), True, [self.ncurses], []
        )
        assert self.db.validate() == []

    def test_validate_reports_corruption(self):
        path = self.db.metadata_path(self.vim)
        doc = json.loads(path.read_text())
        doc["versions"]["8.1"]["dependencies"] = ["gtk? ( broken"]
        doc["required_by"] = ["sys-libs/ncurses"]  # not installed
        path.write_text(json.dumps(doc), encoding="utf-8")
        problems = self.db.validate()
        assert any("bad dependency" in p for p in problems)
        assert any("not installed" in p for p in problems)

    def test_referential_integrity_random_sequences(self):
        import random

        rng = random.Random(30)
        packages = {
            self.ncurses: parse_version("6.1-r2"),
            self.vim: parse_version("8.1"),
            pkg("app-editors/vim-core"): parse_version("8.1"),
            pkg("sys-apps/acl"): parse_version("2.2.53"),
        }
        recorded_deps = {}
        for _ in range(60):
            target = rng.choice(list(packages))
            meta = self.db.get_metadata(target)
            if meta.installed is None:
                installed_others = [
                    p
                    for p in packages
                    if p != target and self.db.get_metadata(p).installed
                ]
                deps = [
                    p for p in installed_others if rng.random() < 0.5
                ]
                self.db.record_install(
                    target, packages[target], rng.random() < 0.5, deps, []
                )
                recorded_deps[target] = deps
            else:
                requirers = [
                    m.name
                    for m in self.db.iter_packages()
                    if target in [d for d in recorded_deps.get(m.name, [])]
                    and m.installed is not None
                ]
                if requirers:
                    continue  # keep the state consistent: no dangling removal
                self.db.record_removal(target)
                recorded_deps.pop(target, None)
            assert self.db.validate() == []
            # required_by matches exactly what installs recorded
            for meta in self.db.iter_packages():
                expected = sorted(
                    requirer.render()
                    for requirer, deps in recorded_deps.items()
                    if meta.name in deps
                    and self.db.get_metadata(requirer).installed is not None
                )
                assert [p.render() for p in meta.required_by] == expected


class TestArchiveCache:
    def test_put_get_round_trip(self, db, store_dir):
        db.sync(DirectoryStore(store_dir))
        key = BuildKey(
            pkg("sys-libs/ncurses"), parse_version("6.1-r2"), UseFlagSet.of(["unicode"])
        )
        assert db.archive_get(key) is None
        db.archive_put(key, b"tar bytes")
        assert db.archive_get(key) == b"tar bytes"

    def test_distinct_flags_distinct_entries(self, db, store_dir):
        db.sync(DirectoryStore(store_dir))
        base = pkg("sys-libs/ncurses")
        v = parse_version("6.1-r2")
        key_a = BuildKey(base, v, UseFlagSet.of(["unicode"]))
        key_b = BuildKey(base, v, UseFlagSet.of(["unicode", "mousewheel"]))
        db.archive_put(key_a, b"a")
        db.archive_put(key_b, b"b")
        assert db.archive_get(key_a) == b"a"
        assert db.archive_get(key_b) == b"b"

    def test_archive_path_layout(self, db, store_dir):
        db.sync(DirectoryStore(store_dir))
        key = BuildKey(pkg("sys-libs/ncurses"), parse_version("6.1-r2"), UseFlagSet())
        db.archive_put(key, b"x")
        expected = (
            db.root
            / "sys-libs"
            / "ncurses"
            / "archives"
            / "sys-libs_ncurses-6.1-r2[].tar"
        )
        assert expected.is_file()


class TestStoreLayout:
    def test_write_store_shape(self, store_dir):
        manifest = (store_dir / "manifest.txt").read_text()
        assert manifest == "app-editors\nsys-apps\nsys-libs\n"
        doc = json.loads((store_dir / "sys-libs.json").read_text())
        assert set(doc) == {"ncurses"}
        assert doc["ncurses"]["name"] == "sys-libs/ncurses"
        assert set(doc["ncurses"]["versions"]) == set(NCURSES_VERSIONS)
        assert "installed" not in doc["ncurses"]
