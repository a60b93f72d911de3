import hashlib
import json

from chanforge.abspath import AbsPath
from chanforge.canyon_tracer import default_scene, scene_to_dict
from chanforge.metadata import (
    canonical_json,
    make_manifest,
    manifest_to_json,
    md5_of_text,
    now_utc_iso,
    same_run,
    scene_hash,
)


def test_md5_of_text():
    assert md5_of_text("hello world") == "5eb63bbbe01eeed093cb22bb8f5acdc3"
    assert md5_of_text("") == hashlib.md5(b"").hexdigest()


def test_canonical_json():
    assert canonical_json({"b": 1, "a": [1.5, None]}) == '{"a":[1.5,null],"b":1}'


def test_scene_hash_ignores_key_order():
    d = scene_to_dict(default_scene())
    reordered = dict(reversed(list(d.items())))
    assert list(reordered) != list(d)
    assert scene_hash(reordered) == scene_hash(d)
    assert scene_hash(scene_to_dict(default_scene().with_max_order(1))) != scene_hash(d)


def test_now_utc_iso(fixed_utc_now):
    assert now_utc_iso() == fixed_utc_now


def test_now_utc_iso_is_utc(monkeypatch):
    monkeypatch.delenv("CHANFORGE_FIXED_UTC_NOW", raising=False)
    assert now_utc_iso().endswith("+00:00")


def test_make_manifest(fixed_utc_now, local_canyon_scene_json, local_two_ray_csv):
    scene_dict = scene_to_dict(default_scene())
    m = make_manifest(
        "0.1.0",
        ("chanforge", "trace", "-o", "rays.csv"),
        scene_dict=scene_dict,
        inputs=[local_two_ray_csv, local_canyon_scene_json],
    )
    assert m.tool_version == "0.1.0"
    assert m.command_line == ["chanforge", "trace", "-o", "rays.csv"]
    assert m.scene_hash == scene_hash(scene_dict)
    assert m.timestamp == fixed_utc_now
    assert m.input_hashes == {
        str(local_canyon_scene_json): AbsPath(local_canyon_scene_json).md5,
        str(local_two_ray_csv): AbsPath(local_two_ray_csv).md5,
    }

    no_scene = make_manifest("0.1.0", ["chanforge"])
    assert no_scene.scene_hash is None
    assert no_scene.input_hashes == {}


def test_manifest_to_json(fixed_utc_now):
    s = manifest_to_json(make_manifest("0.1.0", ["chanforge", "sweep"]))
    assert s.endswith("}\n")
    d = json.loads(s)
    assert list(d) == sorted(d)
    assert d["timestamp"] == fixed_utc_now
    assert d["command_line"] == ["chanforge", "sweep"]
    assert manifest_to_json(make_manifest("0.1.0", ["chanforge", "sweep"])) == s


def test_same_run(monkeypatch):
    monkeypatch.setenv("CHANFORGE_FIXED_UTC_NOW", "2020-01-01T00:00:00+00:00")
    a = make_manifest("0.1.0", ["chanforge", "trace"], scene_dict={"a": 1})
    monkeypatch.setenv("CHANFORGE_FIXED_UTC_NOW", "2021-01-01T00:00:00+00:00")
    b = make_manifest("0.1.0", ["chanforge", "trace"], scene_dict={"a": 1})
    c = make_manifest("0.1.0", ["chanforge", "trace"], scene_dict={"a": 2})
    assert a != b
    assert same_run(a, b)
    assert not same_run(a, c)
