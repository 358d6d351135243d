import numpy as np
import pytest

from cftv.btm import load_btm
from cftv.casestudy import build_case_study
from cftv.errors import BadParameter, EntityFault, SchemaError, TypeMismatch, UnboundPort, UnknownEntityType, UnknownInjectable, UnknownSignal
from cftv.sim import Injectable, SimulationConfig, Trace, build_simulation, parse_path
from cftv.timeunits import MS, S, parse_time


def config(entities, bindings=(), stop="1 s", trace=("*",)):
    return SimulationConfig.from_dict(
        {"entities": list(entities), "bindings": [{"from": a, "to": b} for a, b in bindings], "trace": list(trace), "stop_time": stop}
    )


def camera(period="100 ms"):
    return {"type": "Camera", "name": "cam", "params": {"period": period}}


@pytest.fixture(scope="module")
def case_config():
    return SimulationConfig.from_dict(build_case_study()[1])


def test_case_study_world(case_config):
    sim = build_simulation(case_config)
    assert sorted(sim.entities) == ["m_Camera", "m_CircleRecog", "m_CoastingAssist", "m_HMI", "m_SlClassif"]


def test_empty_world():
    sim = build_simulation(config([]))
    assert len(sim.run_until("1 s")) == 0


def test_unknown_entity_type():
    with pytest.raises(UnknownEntityType):
        build_simulation(config([{"type": "Cameraa", "name": "c"}]))


def test_bad_parameter_and_port():
    with pytest.raises(BadParameter):
        build_simulation(config([{"type": "Camera", "name": "c", "params": {"zoom": 3}}]))
    with pytest.raises(UnboundPort):
        build_simulation(config([camera(), {"type": "HMI", "name": "h"}], [("cam.image", "h.nope")]))


def test_config_invariants():
    with pytest.raises(SchemaError):
        config([camera(), camera()])
    with pytest.raises(SchemaError):
        config([], stop=0)


def test_camera_frame_count():
    trace = build_simulation(config([camera()])).run_until("1 s")
    frames = trace.signal("cam.image")
    assert len(frames) == (1 * S) // (100 * MS) == 10
    assert [r.t_ps for r in frames] == [k * 100 * MS for k in range(1, 11)]


def test_zero_stop():
    sim = build_simulation(config([camera()]))
    assert len(sim.run_until(0)) == 0


def test_run_twice_identical(case_config):
    a = build_simulation(case_config).run_until(3 * S)
    b = build_simulation(case_config).run_until(3 * S)
    assert a.to_jsonl() == b.to_jsonl()
    times = [r.t_ps for r in a.records]
    assert times == sorted(times)


def test_trace_jsonl_round_trip(case_config):
    t = build_simulation(case_config).run_until(S)
    back = Trace.from_jsonl(t.to_jsonl())
    assert back.to_jsonl() == t.to_jsonl()
    assert back.metadata["config_hash"] == case_config.config_hash()
    assert back.digest() == t.digest()


def test_force_pixel_range():
    sim = build_simulation(config([camera()]))
    sim.run_until(150 * MS)
    sim.force("cam.pixel[143800:150990]", 0x00)
    assert np.all(sim.read_signal("cam.pixel[143800:150990]") == 0)
    assert sim.read_signal("cam.pixel[143799]") == 0x80
    sim.run_until(450 * MS)
    assert np.all(sim.read_signal("cam.pixel[143800:150990]") == 0)
    sim.release("cam.pixel[143800:150990]")
    assert np.all(sim.read_signal("cam.pixel[143800:150990]") == 0x80)


def test_release_never_forced_is_noop():
    sim = build_simulation(config([camera()]))
    sim.release("cam.period")
    sim.release("cam.pixel[0:10]")
    assert sim.read_signal("cam.period") == 100 * MS


def test_shadow_semantics():
    inj = Injectable("x.v", 1)
    inj.force(5)
    inj.write(7)
    assert inj.read() == 5
    inj.release()
    assert inj.read() == 7


def test_array_shadow_semantics():
    inj = Injectable("x.a", np.zeros(4, dtype=np.uint8))
    inj.force(9, slice(1, 3))
    inj.write(np.full(4, 2, dtype=np.uint8))
    assert inj.read().tolist() == [2, 9, 9, 2]
    inj.release(slice(1, 2))
    assert inj.read().tolist() == [2, 2, 9, 2]


def test_force_idempotent():
    a, b = Injectable("x.v", 1), Injectable("x.v", 1)
    a.force(3)
    b.force(3)
    b.force(3)
    assert a.read() == b.read() and a.is_forced and b.is_forced
    b.release()
    assert not b.is_forced


def test_force_errors():
    sim = build_simulation(config([camera()]))
    with pytest.raises(UnknownInjectable):
        sim.force("cam.nothing", 1)
    with pytest.raises(TypeMismatch):
        sim.force("cam.pixel[0:4]", 300)
    with pytest.raises(TypeMismatch):
        sim.force("cam.period", "fast")
    with pytest.raises(UnknownInjectable):
        sim.force("cam.pixel[999999999]", 0)


def test_read_signal():
    sim = build_simulation(config([camera()]))
    assert sim.read_signal("cam.sign_value") == 0xA5  # parameter
    with pytest.raises(UnknownSignal):
        sim.read_signal("cam.nothing")


def test_parse_path():
    assert parse_path("m_Camera.pixel[143800:150990]") == ("m_Camera.pixel", slice(143800, 150990))
    assert parse_path("m_Camera.pixel[405:517680:719]") == ("m_Camera.pixel", slice(405, 517680, 719))
    assert parse_path("a.b[0x10]") == ("a.b", 16)
    assert parse_path("a.b") == ("a.b", None)
    with pytest.raises(UnknownInjectable):
        parse_path("a.b[1:2:3:4]")


def test_ports_are_injectable():
    sim = build_simulation(config([camera(), {"type": "HMI", "name": "h"}], [("cam.image", "h.image")]))
    assert sim.has_path("h.image") and sim.has_path("h.image.delay") and sim.has_path("cam.alive")
    sim.force("h.image", None)
    trace = sim.run_until(S)
    assert trace.signal("cam.image") and not trace.signal("h.image")


def test_injection_transparency(case_config):
    idle = {
        "name": "idle",
        "clocks": ["c"],
        "states": [{"name": "s", "initial": True}, {"name": "t"}],
        "transitions": [{"src": "s", "tgt": "t", "guard": "clock(c) == 100 s", "actions": ["force(m_Camera.pixel[0:10], 0)"]}],
    }
    plain = build_simulation(case_config).run_until(2 * S)
    sim = build_simulation(case_config)
    sim.add_btm(load_btm(idle))
    assert sim.run_until(2 * S).to_jsonl() == plain.to_jsonl()


def test_entity_fault_keeps_partial_trace():
    cfg = config([{"type": "BoolLogic", "name": "A", "params": {"faults": ["f"], "outputs": {"p": {"o": "f"}}}}])
    sim = build_simulation(cfg)

    def boom(tag, payload):
        raise RuntimeError("broken")

    sim.run_until(250 * MS)
    sim.entities["A"].on_timer = boom
    with pytest.raises(EntityFault) as info:
        sim.run_until(S)
    assert len(info.value.trace.signal("A.p")) == 2


def test_time_units():
    assert parse_time("23 s") == 23 * S
    assert parse_time("28.8 s") == 28_800 * MS
    assert parse_time(5) == 5
