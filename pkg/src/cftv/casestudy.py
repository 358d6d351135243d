"""The coasting-assistant case study as executable fixtures.

``build_case_study()`` returns the documents (model, simulation config,
bindings, BTM library) that the CLI also reads from the shipped data
directory.  ``python -m cftv.casestudy DIR`` regenerates those files.
"""

from __future__ import annotations

import copy
import sys
from importlib import resources
from pathlib import Path

from .jsonio import dumps_pretty, read_json, write_atomic

# CFT component id -> simulation entity name
ENTITY_NAMES = {
    "camera": "m_Camera",
    "circleRecog": "m_CircleRecog",
    "slClassif": "m_SlClassif",
    "coastingAssist": "m_CoastingAssist",
    "HMI": "m_HMI",
}
ENTITY_TYPES = {
    "m_Camera": "Camera",
    "m_CircleRecog": "CircleRecog",
    "m_SlClassif": "SlClassif",
    "m_CoastingAssist": "CoastingAssist",
    "m_HMI": "HMI",
}
LINKS = [
    ("camera.image", "circleRecog.image"),
    ("camera.image", "HMI.image"),
    ("circleRecog.segment", "slClassif.segment"),
    ("circleRecog.distance", "coastingAssist.distance"),
    ("slClassif.limit", "coastingAssist.limit"),
    ("coastingAssist.hint", "HMI.hint"),
]
# bus technology per link source (transaction-level refinement)
CHANNEL_ROLES = {"camera.image": "MOST", "circleRecog.segment": "FlexRay"}
ROLE_LATENCY = {"MOST": "500 us", "FlexRay": "250 us", "CAN": "1 ms"}

EXCERPT_SCOPES = {
    "camera": ["camera"],
    "coastingAssist": ["coastingAssist"],
    "pipeline": ["camera", "circleRecog", "slClassif", "coastingAssist"],
    "system": ["camera", "circleRecog", "slClassif", "coastingAssist", "HMI"],
}

HORIZONTAL_LINE = "[143800:150990]"  # rows 200..209 of a 719-wide grid
VERTICAL_LINE = "[405:517680:719]"  # column 405, every row
SCATTER = "[7::97]"  # deterministic sparse lattice


def _fm(fid, cls, port, maps=None):
    d = {"id": fid, "name": fid, "class": cls, "port": port}
    if maps:
        d["maps"] = list(maps)
    return d


def _element(ifms, ofms, bes, drives):
    """``drives`` maps each OFM to its input ids; several inputs get an OR gate."""
    gates, edges = [], []
    for ofm, srcs in drives.items():
        if len(srcs) == 1:
            edges.append({"src": srcs[0], "dst": ofm})
        else:
            gid = f"or_{ofm}"
            gates.append({"id": gid, "kind": "OR"})
            edges.extend({"src": s, "dst": gid} for s in srcs)
            edges.append({"src": gid, "dst": ofm})
    return {"ifms": ifms, "ofms": ofms, "basic_events": bes, "gates": gates, "edges": edges}


def model_document():
    camera = {
        "id": "camera",
        "inports": [],
        "outports": ["image"],
        "cft": _element(
            [],
            [
                _fm("omission_of_image", "halt", "image"),
                _fm("frozen_image", "content", "image"),
                _fm("corrupted_image", "content", "image"),
                _fm("sampling_deviation", "late", "image"),
            ],
            [
                {"id": "camera_defect", "name": "camera defect", "fit": 120.0},
                {"id": "content_failure", "name": "frozen image stream", "fit": 40.0},
                {"id": "pixel_failure", "name": "pixel corruption", "fit": 200.0},
                {"id": "samptime_deviation", "name": "sampling time deviation", "fit": 60.0},
            ],
            {
                "omission_of_image": ["camera_defect"],
                "frozen_image": ["content_failure"],
                "corrupted_image": ["pixel_failure"],
                "sampling_deviation": ["samptime_deviation"],
            },
        ),
    }
    circle = {
        "id": "circleRecog",
        "inports": ["image"],
        "outports": ["segment", "distance"],
        "cft": {
            "ifms": [
                _fm("omission_of_image", "halt", "image"),
                _fm("frozen_image", "content", "image"),
                _fm("corrupted_image", "content", "image"),
                _fm("sampling_deviation", "late", "image"),
            ],
            "ofms": [
                _fm("no_circle", "halt", "segment"),
                _fm("erroneous_circle", "content", "segment"),
                _fm("circle_late", "late", "segment"),
                _fm("distance_omission", "halt", "distance"),
            ],
            "basic_events": [{"id": "recog_defect", "name": "circle recognition defect", "fit": 80.0}],
            "gates": [{"id": "or_lost", "kind": "OR"}, {"id": "or_erroneous", "kind": "OR"}],
            "edges": [
                {"src": "omission_of_image", "dst": "or_lost"},
                {"src": "recog_defect", "dst": "or_lost"},
                {"src": "or_lost", "dst": "no_circle"},
                {"src": "or_lost", "dst": "distance_omission"},
                {"src": "frozen_image", "dst": "or_erroneous"},
                {"src": "corrupted_image", "dst": "or_erroneous"},
                {"src": "or_erroneous", "dst": "erroneous_circle"},
                {"src": "sampling_deviation", "dst": "circle_late"},
            ],
        },
    }
    classif = {
        "id": "slClassif",
        "inports": ["segment"],
        "outports": ["limit"],
        "cft": _element(
            [
                _fm("no_circle", "halt", "segment"),
                _fm("erroneous_circle_recognition", "content", "segment", ["erroneous_circle"]),
                _fm("circle_late", "late", "segment"),
            ],
            [
                _fm("sl_omission", "halt", "limit"),
                _fm("sl_erroneous", "content", "limit"),
                _fm("sl_late", "late", "limit"),
            ],
            [{"id": "classif_defect", "name": "classification defect", "fit": 80.0}],
            {
                "sl_omission": ["no_circle", "classif_defect"],
                "sl_erroneous": ["erroneous_circle_recognition"],
                "sl_late": ["circle_late"],
            },
        ),
    }
    coasting = {
        "id": "coastingAssist",
        "inports": ["limit", "distance"],
        "outports": ["hint"],
        "cft": _element(
            [
                _fm("sl_omission", "halt", "limit"),
                _fm("sl_erroneous", "content", "limit"),
                _fm("sl_late", "late", "limit"),
                _fm("di_omission", "halt", "distance", ["distance_omission"]),
            ],
            [
                _fm("missing_hint", "halt", "hint"),
                _fm("erroneous_hint", "content", "hint"),
                _fm("hint_late", "late", "hint"),
            ],
            [{"id": "ECU_defect", "name": "coasting ECU defect", "fit": 30.0}],
            {
                "missing_hint": ["sl_omission", "di_omission", "ECU_defect"],
                "erroneous_hint": ["sl_erroneous"],
                "hint_late": ["sl_late"],
            },
        ),
    }
    hmi = {
        "id": "HMI",
        "inports": ["image", "hint"],
        "outports": ["display"],
        "cft": _element(
            [
                _fm("omission_of_image", "halt", "image"),
                _fm("frozen_image", "content", "image"),
                _fm("corrupted_image", "content", "image"),
                _fm("missing_hint", "halt", "hint"),
                _fm("erroneous_hint", "content", "hint"),
                _fm("hint_late", "late", "hint"),
            ],
            [
                _fm("image_content_failure", "content", "display"),
                _fm("image_omission", "halt", "display"),
                _fm("hint_missing", "halt", "display"),
                _fm("hint_erroneous", "content", "display"),
                _fm("sl_late", "late", "display"),
            ],
            [{"id": "display_defect", "name": "head unit display defect", "fit": 50.0}],
            {
                "image_content_failure": ["frozen_image", "corrupted_image"],
                "image_omission": ["omission_of_image", "display_defect"],
                "hint_missing": ["missing_hint", "display_defect"],
                "hint_erroneous": ["erroneous_hint"],
                "sl_late": ["hint_late"],
            },
        ),
    }
    return {
        "components": [camera, circle, classif, coasting, hmi],
        "connections": [{"from": a, "to": b} for a, b in LINKS],
    }


def _entity_port(ref):
    comp, port = ref.split(".")
    return f"{ENTITY_NAMES[comp]}.{port}"


def sim_document():
    return {
        "entities": [{"type": ENTITY_TYPES[n], "name": n, "params": {}} for n in ENTITY_NAMES.values()],
        "bindings": [{"from": _entity_port(a), "to": _entity_port(b)} for a, b in LINKS],
        "trace": ["*"],
        "stop_time": "32 s",
        "seed": 0,
    }


def _lit(*templates, **params):
    return {"templates": list(templates), "params": params}


def _mon(signal, classes, **extra):
    d = {"signal": signal, "classes": list(classes)}
    d.update(extra)
    return d


LIMIT_TIMING = {"eps": "50 ms", "window": "1 s"}


def bindings_document():
    pix = "m_Camera.pixel"
    corrupt = _lit("pixel_line_h", "pixel_line_v", "pixel_scatter", target=pix, value="0x00", t_start="23 s")
    literals = {
        "camera.camera_defect": _lit("omission", target="m_Camera.period", value="inf"),
        "camera.content_failure": _lit("freeze_frame", target=pix, t_start="22 s"),
        "camera.pixel_failure": corrupt,
        "camera.samptime_deviation": _lit("sample_jitter", target="m_Camera.period", period="170 ms", t_start="23 s"),
        "circleRecog.recog_defect": _lit("omission", target="m_CircleRecog.alive", value="false"),
        "circleRecog.omission_of_image": _lit("omission", target="m_CircleRecog.image", value="null"),
        "circleRecog.frozen_image": _lit("freeze_frame", target="m_CircleRecog.image", t_start="22 s"),
        "circleRecog.corrupted_image": corrupt,
        "circleRecog.sampling_deviation": _lit("sample_jitter", target="m_Camera.period", period="170 ms", t_start="23 s"),
        "slClassif.classif_defect": _lit("omission", target="m_SlClassif.alive", value="false"),
        "slClassif.no_circle": _lit("omission", target="m_SlClassif.segment", value="null"),
        "slClassif.erroneous_circle_recognition": _lit("pixel_line_h", target=pix, value="0x00", t_start="23 s"),
        "slClassif.circle_late": _lit("delay", target="m_SlClassif.segment.delay", value="300 ms"),
        "coastingAssist.ECU_defect": _lit("omission", target="m_CoastingAssist.alive", value="false"),
        "coastingAssist.sl_omission": _lit("omission", target="m_CoastingAssist.limit", value="null"),
        "coastingAssist.sl_erroneous": _lit("stuck_value", target="m_CoastingAssist.limit", value="120"),
        "coastingAssist.sl_late": _lit("delay", target="m_CoastingAssist.limit.delay", value="300 ms"),
        "coastingAssist.di_omission": _lit("omission", target="m_CoastingAssist.distance", value="null"),
        "HMI.display_defect": _lit("omission", target="m_HMI.alive", value="false"),
        "HMI.omission_of_image": _lit("omission", target="m_HMI.image", value="null"),
        "HMI.frozen_image": _lit("freeze_frame", target="m_HMI.image", t_start="22 s"),
        "HMI.corrupted_image": corrupt,
        "HMI.missing_hint": _lit("omission", target="m_HMI.hint", value="null"),
        "HMI.erroneous_hint": _lit("stuck_value", target="m_CoastingAssist.limit", value="120"),
        "HMI.hint_late": _lit("delay", target="m_HMI.hint.delay", value="300 ms"),
    }
    ofms = {
        "camera.omission_of_image": _mon("m_Camera.image", ["halt"]),
        "camera.frozen_image": _mon("m_Camera.image", ["content"]),
        "camera.corrupted_image": _mon("m_Camera.image", ["content"]),
        "camera.sampling_deviation": _mon("m_Camera.image", ["late"], eps="10 ms"),
        "circleRecog.no_circle": _mon("m_CircleRecog.segment", ["halt"]),
        "circleRecog.erroneous_circle": _mon("m_CircleRecog.segment", ["content"]),
        "circleRecog.circle_late": _mon("m_CircleRecog.segment", ["late"], **LIMIT_TIMING),
        "circleRecog.distance_omission": _mon("m_CircleRecog.distance", ["halt"]),
        "slClassif.sl_omission": _mon("m_SlClassif.limit", ["halt"], **LIMIT_TIMING),
        "slClassif.sl_erroneous": _mon("m_SlClassif.limit", ["content"], **LIMIT_TIMING),
        "slClassif.sl_late": _mon("m_SlClassif.limit", ["late"], **LIMIT_TIMING),
        "coastingAssist.missing_hint": _mon("m_CoastingAssist.advice", ["halt"]),
        "coastingAssist.erroneous_hint": _mon("m_CoastingAssist.advice", ["content", "erratic"]),
        "coastingAssist.hint_late": _mon("m_CoastingAssist.speed_limit", ["late"], **LIMIT_TIMING),
        "HMI.image_content_failure": _mon("m_HMI.shown_image", ["content"]),
        "HMI.image_omission": _mon("m_HMI.shown_image", ["halt"]),
        "HMI.hint_missing": _mon("m_HMI.advice_shown", ["halt"]),
        "HMI.hint_erroneous": _mon("m_HMI.advice_shown", ["content", "erratic"]),
        "HMI.sl_late": _mon("m_HMI.limit_shown", ["late"], **LIMIT_TIMING),
    }
    return {"literals": literals, "ofms": ofms}


def _btm(name, placeholders, states, transitions, clocks=("OKTime",)):
    return {
        "name": name,
        "clocks": list(clocks),
        "locals": {},
        "events": {"in": [], "out": []},
        "states": [{"name": s, "initial": i == 0} for i, s in enumerate(states)],
        "transitions": [{"src": s, "tgt": t, "guard": g, "actions": a} for s, t, g, a in transitions],
        "placeholders": list(placeholders),
    }


def _persistent_force(name, selector):
    target = "${target}" + selector
    return _btm(
        name,
        ["target", "value", "t_start"],
        ["eInit", "eFree", "eState"],
        [
            ("eInit", "eFree", "", []),
            ("eFree", "eState", "clock(OKTime) == ${t_start}", [f"force({target}, ${{value}})"]),
            ("eState", "eState", "", [f"release({target})", f"force({target}, ${{value}})"]),
        ],
    )


def _one_shot(name, value_placeholder="value"):
    return _btm(
        name,
        ["target", value_placeholder, "t_start"],
        ["errFree", "errState"],
        [("errFree", "errState", "clock(OKTime) == ${t_start}", [f"force(${{target}}, ${{{value_placeholder}}})"])],
    )


def btm_library():
    """Template id -> BTM template document."""
    lib = {
        "freeze_frame": _btm(
            "freeze_frame",
            ["target", "t_start"],
            ["errFree", "errState1"],
            [("errFree", "errState1", "clock(OKTime) == ${t_start}", ["force(${target}, var(${target}))"])],
        ),
        "pixel_line_h": _persistent_force("pixel_line_h", HORIZONTAL_LINE),
        "pixel_line_v": _persistent_force("pixel_line_v", VERTICAL_LINE),
        "pixel_scatter": _persistent_force("pixel_scatter", SCATTER),
        "omission": _one_shot("omission"),
        "sample_jitter": _btm(
            "sample_jitter",
            ["target", "period", "t_start"],
            ["errFree", "errJitter", "errDone"],
            [
                ("errFree", "errJitter", "clock(OKTime) == ${t_start}", ["force(${target}, ${period})", "reset(OKTime)"]),
                ("errJitter", "errDone", "clock(OKTime) == 1 ns", ["release(${target})"]),
            ],
        ),
        "stuck_value": _one_shot("stuck_value"),
        "delay": _one_shot("delay"),
    }
    return lib


def build_case_study():
    """(model doc, simulation config doc, bindings doc, BTM library) of the case study."""
    return model_document(), sim_document(), bindings_document(), btm_library()


# ---------------------------------------------------------------------------
# transaction-level refinement


def _channel_links(links):
    out = []
    for src, dst in links:
        role = CHANNEL_ROLES.get(src, "CAN")
        sc, sp = src.split(".")
        dc, _ = dst.split(".")
        out.append((f"ch_{sc}_{sp}_{dc}", role, src, dst))
    return out


def refine_channels(config, level="transaction"):
    """Insert one Channel entity per link; application entities stay untouched."""
    if level == "direct":
        return copy.deepcopy(config)
    if level != "transaction":
        raise ValueError(f"unknown refinement level {level!r}")
    cfg = copy.deepcopy(config)
    new_bindings = []
    for i, b in enumerate(config["bindings"]):
        role = "CAN"
        for src, r in CHANNEL_ROLES.items():
            if b["from"] == _entity_port(src):
                role = r
        inst = "ch_" + b["from"].replace(".", "_") + "_" + b["to"].split(".")[0]
        cfg["entities"].append(
            {"type": "Channel", "name": inst, "params": {"role": role, "latency": ROLE_LATENCY[role]}}
        )
        new_bindings.append({"from": b["from"], "to": f"{inst}.in"})
        new_bindings.append({"from": f"{inst}.out", "to": b["to"]})
    cfg["bindings"] = new_bindings
    return cfg


def channel_entity_name(src, dst):
    return "ch_" + _entity_port(src).replace(".", "_") + "_" + ENTITY_NAMES[dst.split(".")[0]]


def refine_cft(model_doc):
    """Add a channel CFT element on every connection (pass-through plus message_delay/message_loss)."""
    doc = copy.deepcopy(model_doc)
    comps = {c["id"]: c for c in doc["components"]}
    conns = []
    for c in model_doc["connections"]:
        src, dst = c["from"], c["to"]
        sc, sp = src.split(".")
        cid = channel_entity_name(src, dst)
        upstream = [f for f in comps[sc]["cft"]["ofms"] if f["port"] == sp]
        ifms, ofms, drives = [], [], {}
        has = {f["class"] for f in upstream}
        bes = []
        if "late" in has:
            bes.append({"id": "message_delay", "name": "message delay", "fit": 10.0})
        if "halt" in has:
            bes.append({"id": "message_loss", "name": "message loss", "fit": 10.0})
        for f in upstream:
            ifms.append(_fm("in_" + f["id"], f["class"], "in", [f["id"]]))
            ofms.append(_fm(f["id"], f["class"], "out"))
            srcs = ["in_" + f["id"]]
            if f["class"] == "late":
                srcs.append("message_delay")
            if f["class"] == "halt":
                srcs.append("message_loss")
            drives[f["id"]] = srcs
        doc["components"].append(
            {"id": cid, "inports": ["in"], "outports": ["out"], "cft": _element(ifms, ofms, bes, drives)}
        )
        conns.append({"from": src, "to": f"{cid}.in"})
        conns.append({"from": f"{cid}.out", "to": dst})
    doc["connections"] = conns
    return doc


def refine_bindings(bindings_doc, model_doc):
    """Bindings for the channel basic events and monitors for the channel OFMs."""
    doc = copy.deepcopy(bindings_doc)
    for c in model_doc["connections"]:
        cid = channel_entity_name(c["from"], c["to"])
        sc, sp = c["from"].split(".")
        comp = next(x for x in model_doc["components"] if x["id"] == sc)
        classes = set()
        for f in comp["cft"]["ofms"]:
            if f["port"] != sp:
                continue
            classes.add(f["class"])
            doc["ofms"][f"{cid}.{f['id']}"] = _mon(f"{cid}.out", [f["class"]], **LIMIT_TIMING)
            lit = f"{cid}.in_{f['id']}"
            if f["class"] == "halt":
                doc["literals"][lit] = _lit("omission", target=f"{cid}.in", value="null")
            elif f["class"] == "late":
                doc["literals"][lit] = _lit("delay", target=f"{cid}.in.delay", value="300 ms")
            else:
                # content failures reuse the downstream component's stimulus
                dc = c["to"].split(".")[0]
                down = next(x for x in model_doc["components"] if x["id"] == dc)
                twin = next((m for m in down["cft"]["ifms"] if f["id"] in m.get("maps", [m["id"]])), None)
                if twin and f"{dc}.{twin['id']}" in bindings_doc["literals"]:
                    doc["literals"][lit] = copy.deepcopy(bindings_doc["literals"][f"{dc}.{twin['id']}"])
        if "late" in classes:
            doc["literals"][f"{cid}.message_delay"] = _lit("delay", target=f"{cid}.latency", value="300 ms")
        if "halt" in classes:
            doc["literals"][f"{cid}.message_loss"] = _lit("omission", target=f"{cid}.loss", value="true")
    return doc


def build_refined_case_study():
    model, sim, binds, lib = build_case_study()
    return refine_cft(model), refine_channels(sim), refine_bindings(binds, model), lib


# ---------------------------------------------------------------------------
# shipped data files


def case_study_files():
    """Relative path -> document for every shipped case-study file."""
    model, sim, binds, lib = build_case_study()
    r_model, r_sim, r_binds, _ = build_refined_case_study()
    files = {
        "coasting.cft.json": model,
        "coasting.sim.json": sim,
        "coasting.bind.json": binds,
        "coasting_tlm.cft.json": r_model,
        "coasting_tlm.sim.json": r_sim,
        "coasting_tlm.bind.json": r_binds,
    }
    for name, doc in lib.items():
        files[f"btm/{name}.btm.json"] = doc
    return files


def write_files(directory, files):
    directory = Path(directory)
    for rel, doc in sorted(files.items()):
        path = directory / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_atomic(path, dumps_pretty(doc))


def data_dir(name="coasting"):
    """Location of a shipped data directory inside the installed package."""
    return Path(str(resources.files("cftv") / "data" / name))


def load_shipped(name="coasting"):
    d = data_dir(name)
    return {str(p.relative_to(d)): read_json(p) for p in sorted(d.rglob("*.json"))}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    out = Path(argv[0]) if argv else data_dir("coasting")
    write_files(out, case_study_files())
    from .fixtures import fixture_files

    if not argv:
        for name, files in fixture_files().items():
            write_files(data_dir("fixtures") / name, files)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
