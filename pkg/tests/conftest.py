import json

import pytest

from nbest_slu.corpus import AsrHypothesis, DatasetSplit, Sample, SemanticTriplet


def make_sample(sid, hyps, gold=(), system="", transcript=None):
    return Sample(
        id=sid,
        system_utterance=system,
        hypotheses=tuple(AsrHypothesis(text=t, score=s) for t, s in hyps),
        gold=tuple(SemanticTriplet(*t) for t in gold),
        transcript=transcript,
    )


@pytest.fixture
def tiny_split():
    samples = (
        make_sample("a", [("i want a moderately priced restaurant", -0.1)],
                    gold=[("inform", "pricerange", "moderate")],
                    system="what price range do you want"),
        make_sample("b", [("west part of town", -0.2), ("west part of time", -0.9)],
                    gold=[("inform", "area", "west")],
                    system="what part of town do you have in mind"),
        make_sample("c", [("thank you good bye", -0.3)],
                    gold=[("thankyou", "", ""), ("bye", "", "")]),
        make_sample("d", [("phone number please", -0.4)],
                    gold=[("request", "phone", "")],
                    system="golden house is a cheap restaurant"),
        make_sample("e", [("cheap food", -0.5)],
                    gold=[("inform", "pricerange", "cheap")],
                    system="what price range do you want"),
    )
    return DatasetSplit(name="train", samples=samples)


def write_dstc2_call(root, call_id, turns):
    """Write one fabricated DSTC2-style call directory.

    ``turns`` is a list of dicts with keys: system, hyps (list of (text,
    score)), transcription, semantics (list of {act, slots}).
    """
    call = root / call_id
    call.mkdir(parents=True)
    log = {
        "session-id": call_id,
        "turns": [
            {
                "output": {"transcript": t["system"]},
                "input": {"live": {"asr-hyps": [{"asr-hyp": h, "score": s} for h, s in t["hyps"]]}},
            }
            for t in turns
        ],
    }
    label = {
        "turns": [
            {"transcription": t["transcription"], "semantics": {"json": t["semantics"]}}
            for t in turns
        ],
    }
    (call / "log.json").write_text(json.dumps(log))
    (call / "label.json").write_text(json.dumps(label))
    return call


@pytest.fixture
def dstc2_root(tmp_path):
    root = tmp_path / "dstc2"
    write_dstc2_call(root, "Mar13_S0A0/voip-call-1", [
        {
            "system": "Hello, welcome to the restaurant system. How may I help you?",
            "hyps": [("i want a moderately priced restaurant", -0.04),
                     ("i want a moderately priced restaurants", -3.1)],
            "transcription": "i want a moderately priced restaurant",
            "semantics": [{"act": "inform", "slots": [["pricerange", "moderate"]]}],
        },
        {
            "system": "What part of town do you have in mind?",
            "hyps": [("west part of town", -0.2)],
            "transcription": "west part of town",
            "semantics": [{"act": "inform", "slots": [["area", "west"]]}],
        },
        {
            "system": "Golden house is a nice restaurant in the west of town.",
            "hyps": [("what is the phone number", -0.5)],
            "transcription": "what is the phone number",
            "semantics": [{"act": "request", "slots": [["slot", "phone"]]}],
        },
    ])
    write_dstc2_call(root, "Mar13_S0A0/voip-call-2", [
        {
            "system": "Hello, how may I help you?",
            "hyps": [("thank you good bye", -0.1)],
            "transcription": "thank you good bye",
            "semantics": [{"act": "thankyou", "slots": []}, {"act": "bye", "slots": []}],
        },
    ])
    flist = tmp_path / "flist.txt"
    flist.write_text("Mar13_S0A0/voip-call-1\nMar13_S0A0/voip-call-2\n")
    return root, flist
