import re
from pathlib import Path

import pytest

from misinforank.porter import stem

ROOT = Path(__file__).resolve().parents[1]

CLASSIC = {
    "caresses": "caress", "ponies": "poni", "ties": "ti", "caress": "caress", "cats": "cat",
    "feed": "feed", "agreed": "agre", "plastered": "plaster", "bled": "bled", "motoring": "motor",
    "sing": "sing", "conflated": "conflat", "troubled": "troubl", "sized": "size", "hopping": "hop",
    "tanned": "tan", "falling": "fall", "hissing": "hiss", "fizzed": "fizz", "failing": "fail",
    "filing": "file", "happy": "happi", "sky": "sky", "relational": "relat", "conditional": "condit",
    "rational": "ration", "valenci": "valenc", "digitizer": "digit", "operator": "oper",
    "feudalism": "feudal", "decisiveness": "decis", "hopefulness": "hope", "callousness": "callous",
    "formaliti": "formal", "sensitiviti": "sensit", "sensibiliti": "sensibl", "triplicate": "triplic",
    "formative": "form", "formalize": "formal", "electriciti": "electr", "electrical": "electr",
    "hopeful": "hope", "goodness": "good", "revival": "reviv", "allowance": "allow",
    "inference": "infer", "airliner": "airlin", "adjustable": "adjust", "defensible": "defens",
    "irritant": "irrit", "replacement": "replac", "adjustment": "adjust", "dependent": "depend",
    "adoption": "adopt", "homologou": "homolog", "communism": "commun", "activate": "activ",
    "angulariti": "angular", "homologous": "homolog", "effective": "effect", "bowdlerize": "bowdler",
    "probate": "probat", "rate": "rate", "cease": "ceas", "controll": "control", "roll": "roll",
}


@pytest.mark.parametrize("word,expected", sorted(CLASSIC.items()))
def test_classic_vocabulary(word, expected):
    assert stem(word) == expected


def test_short_words_unchanged():
    assert stem("is") == "is" and stem("a") == "a"


def _vocabulary():
    words = set()
    for path in [ROOT / "README.md", *sorted((ROOT / "src").rglob("*.py")), *sorted((ROOT / "tests").rglob("*.py"))]:
        if path.exists():
            words.update(re.findall(r"[a-z]{3,}", path.read_text(encoding="utf-8").lower()))
    words.update(CLASSIC)
    return sorted(words)


def test_matches_reference_implementation():
    porter = pytest.importorskip("nltk.stem.porter")
    ref = porter.PorterStemmer(mode=porter.PorterStemmer.MARTIN_EXTENSIONS)
    vocab = _vocabulary()
    assert len(vocab) > 500
    diffs = [(w, stem(w), ref.stem(w)) for w in vocab if stem(w) != ref.stem(w)]
    assert diffs == []
