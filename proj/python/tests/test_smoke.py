import hashlib
import math
import os
import pathlib
import struct

import pytest

import kolflow

DATA = pathlib.Path(os.environ.get("KOLFLOW_TEST_DATA", pathlib.Path(__file__).parents[2] / "tests" / "data"))
CLI = DATA / "cli"


def raster_ref(kind, w, h, channels, pixels):
    digest = hashlib.sha256(struct.pack(">QQQ", w, h, channels) + bytes(pixels)).hexdigest()
    return f"{kind}:{digest}"


@pytest.fixture()
def engine(tmp_path):
    return kolflow.Engine(tmp_path / "store", with_mocks=True)


def load_inputs(engine):
    return {
        "identity": engine.put("person_image", (CLI / "identity.png").read_bytes()),
        "garment": engine.put("garment_ref", (CLI / "garment.png").read_bytes()),
        "makeup_ref": engine.put("makeup_ref", (CLI / "makeup.png").read_bytes()),
        "background_spec": engine.put("background_spec", (CLI / "beach.txt").read_bytes()),
        "object_ref": engine.put("object_ref", (CLI / "object.png").read_bytes()),
    }


def test_builtins_are_listed(engine):
    services = engine.list_services()
    assert len(services) == 6
    assert [s["service_id"] for s in engine.list_services("makeup")] == ["mock_makeup"]


def test_put_uses_content_hash(engine):
    ref = engine.put("person_image", (CLI / "identity.png").read_bytes())
    assert ref == raster_ref("person_image", 16, 16, 3, [100] * (16 * 16 * 3))
    assert engine.put("background_spec", b"beach").endswith(hashlib.sha256(b"beach").hexdigest())


def test_synthesize_and_run_four_capabilities(engine):
    query = {"capabilities": ["tryon", "makeup", "background", "object_interaction"],
             "inputs": load_inputs(engine)}
    spec = engine.synthesize(query)
    assert [n["id"] for n in spec["nodes"]] == ["tryon", "makeup", "background", "object_interaction"]
    assert spec == engine.synthesize(query)
    assert engine.validate(spec) == []
    record = engine.run(spec)
    assert record["status"] == "succeeded"
    assert all(n["status"] == "succeeded" for n in record["nodes"].values())
    png = engine.get(record["nodes"]["object_interaction"]["outputs"]["out"])
    assert png.startswith(b"\x89PNG")
    assert engine.status(record["run_id"])["status"] == "succeeded"


def test_errors_carry_codes(engine):
    with pytest.raises(kolflow.KolflowError) as info:
        engine.synthesize({"capabilities": ["makeup"], "inputs": {}})
    assert info.value.code == "UNSATISFIABLE_QUERY"
    with pytest.raises(kolflow.KolflowError) as info:
        engine.run({"nodes": []})
    assert info.value.code == "VALIDATION_FAILED"
    assert info.value.details["violations"][0]["code"] == "EMPTY_PIPELINE"
    with pytest.raises(kolflow.KolflowError) as info:
        engine.status("run-missing")
    assert info.value.code == "UNKNOWN_RUN"


def test_register_and_unregister(engine):
    descriptor = engine.list_services("makeup")[0]
    descriptor["service_id"] = "makeup_copy"
    assert engine.register_service(descriptor) == "makeup_copy"
    assert engine.unregister_service("makeup_copy")["service_id"] == "makeup_copy"
    with pytest.raises(kolflow.KolflowError):
        engine.unregister_service("makeup_copy")


def test_topological_order_is_lexicographic():
    assert kolflow.topological_order(["c", "b", "a"], [("a", "c")]) == ["a", "b", "c"]
    with pytest.raises(kolflow.KolflowError) as info:
        kolflow.topological_order(["a", "b"], [("a", "b"), ("b", "a")])
    assert info.value.code == "CYCLE_DETECTED"


def test_similarity_recovers_a_known_transform():
    s, th, tx, ty = 1.7, 0.6, 12.0, -4.0
    src = [(math.cos(k) * (10 + k), math.sin(2 * k) * 7 - k) for k in range(68)]
    dst = [(s * (math.cos(th) * x - math.sin(th) * y) + tx, s * (math.sin(th) * x + math.cos(th) * y) + ty)
           for x, y in src]
    est = kolflow.estimate_similarity(src, dst)
    assert est["scale"] == pytest.approx(s, rel=1e-12)
    assert est["rotation"] == pytest.approx(th, abs=1e-12)
    assert est["tx"] == pytest.approx(tx, abs=1e-9)
    assert est["ty"] == pytest.approx(ty, abs=1e-9)
