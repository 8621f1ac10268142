import io
import subprocess
import sys

import pytest

from treepiece import (
    CorruptVocabFile,
    EmptyCorpus,
    Phase,
    TrainConfig,
    Vocabulary,
    generate_vocabulary,
    load_corpus,
    load_vocab,
    read_corpus,
    read_vocab,
    save_vocab,
    serialize_top,
    train,
    write_vocab,
)
from treepiece.cli import main, oov_rate, unit_stats
from treepiece.errors import ParseErrorAtLine

from helpers import FIXTURES

TINY = FIXTURES / "tiny.tsv"
CORPUS = FIXTURES / "corpus200.tsv"


def tiny_vocab():
    return Vocabulary(
        {"[in:A [sl:B ] ]": 2, "[in:A ]": 1, "[in:A <ph> [sl:C ] ]": 1, "[sl:B ]": 1},
        phase=Phase.DECORATED,
    )


@pytest.fixture
def tiny_vocab_file(tmp_path):
    path = tmp_path / "tiny.tpv"
    save_vocab(tiny_vocab(), path)
    return path


# -- corpus files ---------------------------------------------------------------


def test_two_column_line():
    corpus = read_corpus(["remind me\t[in:A [sl:B me ] ]\n"])
    (record,) = corpus.records
    assert record.utterance == "remind me" and record.domain is None
    assert serialize_top(corpus.skeletons[0]) == "[in:A [sl:B ] ]"


def test_three_columns_and_header(tmp_path):
    corpus = load_corpus(CORPUS)
    assert len(corpus) == 200
    assert corpus.records[0].domain == "messaging"
    assert corpus.records[0].lineno == 2


def test_one_column():
    corpus = read_corpus(["[in:A ]", "[in:B [sl:C x ] ]"], columns=1)
    assert [r.utterance for r in corpus.records] == ["", ""]


def test_strict_parse_error_has_line_number():
    with pytest.raises(ParseErrorAtLine) as info:
        read_corpus(["a\t[in:A ]", "b\t[in:A [sl:B x ]"])
    assert info.value.lineno == 2


def test_column_mismatch():
    with pytest.raises(ParseErrorAtLine):
        read_corpus(["a\t[in:A ]", "[in:A ]"])


def test_lenient_skips_bad_lines():
    corpus = read_corpus(["a\t[in:A ]", "b\t[in:A [sl:B x ]", "c\t[in:A x ]", "d\t[in:C ]"], lenient=True)
    assert [r.utterance for r in corpus.records] == ["a", "d"]


def test_empty_corpus(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("")
    with pytest.raises(EmptyCorpus):
        load_corpus(path)
    with pytest.raises(EmptyCorpus):
        read_corpus(["utterance\tsemantic_parse"])


# -- vocabulary files -------------------------------------------------------------


def test_vocab_round_trip_is_byte_identical(tmp_path):
    vocab, _ = train(load_corpus(CORPUS), TrainConfig(num_merges=20, expand_samples=3))
    first = tmp_path / "a.tpv"
    second = tmp_path / "b.tpv"
    save_vocab(vocab, first)
    loaded = load_vocab(first)
    assert loaded == vocab
    save_vocab(loaded, second)
    assert first.read_bytes() == second.read_bytes()


def test_vocab_round_trip_bare_and_fractional(tmp_path):
    bare = generate_vocabulary(load_corpus(CORPUS), TrainConfig(num_merges=5))
    buf = io.StringIO()
    write_vocab(bare, buf)
    assert read_vocab(io.StringIO(buf.getvalue())) == bare
    frac = Vocabulary({"[in:A ]": 0.1, "[sl:B ]": 0.35})
    buf = io.StringIO()
    write_vocab(frac, buf)
    assert read_vocab(io.StringIO(buf.getvalue())) == frac


def test_vocab_file_format():
    buf = io.StringIO()
    write_vocab(Vocabulary({"[sl:B ]": 1, "[in:A <ph> ]": 3}), buf)
    assert buf.getvalue().splitlines() == [
        "TPV1",
        '{"unit": "[in:A <ph> ]", "freq": 3, "prob": 0.75, "phase": "decorated"}',
        '{"unit": "[sl:B ]", "freq": 1, "prob": 0.25, "phase": "decorated"}',
    ]


def entry(unit, prob, phase="bare", freq=1):
    return '{"unit": "%s", "freq": %s, "prob": %s, "phase": "%s"}' % (unit, freq, prob, phase)


@pytest.mark.parametrize(
    "lines",
    [
        ["TPV1", entry("[in:A ]", 0.25), entry("[sl:B ]", 0.25)],
        ["TPV1"],
        ["TPV2", entry("[in:A ]", 1)],
        [],
        ["TPV1", entry("[in:A  ]", 1)],
        ["TPV1", entry("[in:A ]", 0.5), entry("[in:A ]", 0.5)],
        ["TPV1", entry("[in:A ]", 0.5), entry("[sl:B <ph> ]", 0.5, "decorated")],
        ["TPV1", entry("[in:A <ph> ]", 1, "bare")],
        ["TPV1", entry("[in:A ]", 1, "other")],
        ["TPV1", entry("[in:A ]", '"1"')],
        ["TPV1", entry("[in:A ]", 1, freq=-1)],
        ["TPV1", "not json"],
        ["TPV1", '{"unit": "[in:A ]", "prob": 1, "phase": "bare"}'],
    ],
)
def test_corrupt_vocab_files(lines):
    with pytest.raises(CorruptVocabFile):
        read_vocab(io.StringIO("\n".join(lines) + "\n"))


# -- command line -----------------------------------------------------------------


def run(argv, capsys):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_train_writes_vocab(tmp_path, capsys):
    out = tmp_path / "v.tpv"
    code, stdout, _ = run(["train", "--corpus", CORPUS, "--out", out, "--merges", 20, "--expand-samples", 2], capsys)
    assert code == 0
    assert "initial units: 31" in stdout and "after merges: 51" in stdout
    assert load_vocab(out).phase is Phase.DECORATED


def test_train_stage_bypass_equals_init(tmp_path, capsys):
    out = tmp_path / "v.tpv"
    code, _, _ = run(["train", "--corpus", TINY, "--out", out, "--merges", 0, "--em-iters", 0, "--no-expand"], capsys)
    assert code == 0
    assert load_vocab(out).freq == {"[in:A ]": 4, "[in:D ]": 1, "[sl:B ]": 3, "[sl:C ]": 1}


def test_train_same_seed_is_byte_identical(tmp_path, capsys):
    paths = []
    for name, jobs in (("a", 1), ("b", 1), ("c", 2)):
        path = tmp_path / f"{name}.tpv"
        args = ["train", "--corpus", CORPUS, "--out", path, "--merges", 30, "--seed", 4, "--jobs", jobs]
        assert run(args, capsys)[0] == 0
        paths.append(path.read_bytes())
    assert paths[0] == paths[1] == paths[2]


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    outputs = {}
    for label, env, flag in (("env", "9", []), ("flag", None, ["--seed", 9])):
        if env is None:
            monkeypatch.delenv("TREEPIECE_SEED", raising=False)
        else:
            monkeypatch.setenv("TREEPIECE_SEED", env)
        path = tmp_path / f"{label}.tpv"
        run(["train", "--corpus", CORPUS, "--out", path, "--merges", 10, "--expand-theta", 1.0] + flag, capsys)
        outputs[label] = path.read_bytes()
    assert outputs["env"] == outputs["flag"]


def test_tokenize_examples(tmp_path, capsys):
    vocab = tmp_path / "v.tpv"
    save_vocab(Vocabulary({"[in:A <ph> ]": 1, "[sl:B ]": 1, "[in:A [sl:B ] ]": 1}), vocab)
    corpus = tmp_path / "c.tsv"
    corpus.write_text("x\t[in:A [sl:B x ] ]\ny\t[in:C ]\n")
    code, stdout, _ = run(["tokenize", "--vocab", vocab, "--corpus", corpus], capsys)
    assert code == 0
    assert stdout.splitlines() == ["[in:A [sl:B ] ]", "<OOV>"]


def test_tokenize_sharp_sampling_matches_viterbi(tmp_path, capsys):
    vocab = tmp_path / "v.tpv"
    run(["train", "--corpus", CORPUS, "--out", vocab, "--merges", 30, "--expand-samples", 3], capsys)
    _, viterbi, _ = run(["tokenize", "--vocab", vocab, "--corpus", CORPUS], capsys)
    _, sharp, _ = run(["tokenize", "--vocab", vocab, "--corpus", CORPUS, "--mode", "sample", "--theta", 100], capsys)
    assert viterbi == sharp


def test_tokenize_then_detokenize(tmp_path, capsys):
    vocab = tmp_path / "v.tpv"
    run(["train", "--corpus", CORPUS, "--out", vocab, "--merges", 30], capsys)
    tokens = tmp_path / "tokens.txt"
    trees = tmp_path / "trees.txt"
    assert run(["tokenize", "--vocab", vocab, "--corpus", CORPUS, "--out", tokens], capsys)[0] == 0
    assert run(["detokenize", "--input", tokens, "--out", trees], capsys)[0] == 0
    expected = [serialize_top(s) for s in load_corpus(CORPUS).skeletons]
    assert trees.read_text().splitlines() == expected


def test_detokenize_examples(tmp_path, capsys):
    path = tmp_path / "t.txt"
    path.write_text("[in:A <ph> <ph> ]\t[sl:B ]\t[sl:C ]\n[in:A [sl:B ] ]\n<OOV>\n")
    code, stdout, _ = run(["detokenize", "--input", path], capsys)
    assert code == 0
    assert stdout.splitlines() == ["[in:A [sl:B ] [sl:C ] ]", "[in:A [sl:B ] ]", "<OOV>"]
    path.write_text("[in:A [sl:B ] ]\n[in:A <ph> ]\n")
    code, _, stderr = run(["detokenize", "--input", path], capsys)
    assert code == 2
    assert "line 2" in stderr


def test_stats_hand_tally(tiny_vocab_file, capsys):
    stats = unit_stats(load_corpus(TINY).skeletons, tiny_vocab())
    assert stats == {
        "skeletons": 4,
        "oov": 1,
        "mean_units": 4 / 3,
        "median_units": 1,
        "max_units": 2,
        "vocab_size": 4,
        "vocab_phase": "decorated",
        "vocab_with_placeholders": 1,
        "vocab_without_placeholders": 3,
        "unit_size_histogram": {1: 2, 2: 2},
    }
    code, stdout, _ = run(["stats", "--corpus", TINY, "--vocab", tiny_vocab_file], capsys)
    assert code == 0
    assert stdout.splitlines() == [
        "skeletons: 4",
        "oov: 1",
        "units per skeleton: mean 1.333 median 1 max 2",
        "vocabulary: 4 units, phase decorated (1 with placeholders, 3 without)",
        "unit size histogram (nodes: count):",
        "  1: 2",
        "  2: 2",
    ]


def test_stats_single_unit_and_singletons(tmp_path):
    corpus = load_corpus(CORPUS)
    whole = Vocabulary(dict.fromkeys({serialize_top(s) for s in corpus.skeletons}, 1))
    assert unit_stats(corpus.skeletons, whole)["mean_units"] == 1.0
    singletons = generate_vocabulary(corpus, TrainConfig(num_merges=0))
    mean_nodes = sum(s.node_count for s in corpus.skeletons) / len(corpus)
    assert unit_stats(corpus.skeletons, singletons)["mean_units"] == pytest.approx(mean_nodes, abs=1e-12)


def test_oov_rate(tiny_vocab_file, capsys):
    assert oov_rate(load_corpus(TINY).skeletons, tiny_vocab()) == (1, 25.0)
    code, stdout, _ = run(["oov-rate", "--corpus", TINY, "--vocab", tiny_vocab_file], capsys)
    assert code == 0 and stdout == "oov: 1/4 (25.000%)\n"


def test_oov_rate_closure(tmp_path, capsys):
    vocab = tmp_path / "v.tpv"
    run(["train", "--corpus", CORPUS, "--out", vocab, "--merges", 30], capsys)
    assert run(["oov-rate", "--corpus", CORPUS, "--vocab", vocab], capsys)[1] == "oov: 0/200 (0.000%)\n"


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", "--corpus", str(CORPUS)])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 1
    assert run(["stats", "--corpus", CORPUS, "--vocab", tmp_path / "missing.tpv"], capsys)[0] == 2
    bad = tmp_path / "bad.tsv"
    bad.write_text("a\t[in:A [sl:B x ]\n")
    assert run(["train", "--corpus", bad, "--out", tmp_path / "v.tpv"], capsys)[0] == 2
    assert run(["train", "--corpus", bad, "--out", tmp_path / "v.tpv", "--lenient"], capsys)[0] == 2


def test_console_entry_point(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "treepiece.cli", "oov-rate", "--corpus", str(TINY), "--vocab", str(tmp_path / "nope")],
        capture_output=True, text=True,
    )
    assert result.returncode == 2
