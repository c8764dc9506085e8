"""Synthetic generation and loader contracts."""
import numpy as np
import pytest

from metaxfer.data import (
    Dataset,
    SyntheticTaskSpec,
    build_mapping,
    export_dataset,
    generate_pair,
    load_sequence_labeled,
    load_token_labeled,
    mapping_info,
    parse_sequence_labeled,
    parse_token_labeled,
    serialize_sequence_labeled,
    serialize_token_labeled,
    surface,
)
from metaxfer.errors import ContractError, ParseError


def spec(**kw):
    base = dict(
        task_kind="token_labeling", n_labels=5, shift=0.5,
        vocab_low=32, vocab_high=126, seq_len=(6, 10),
        sizes=(40, 20, 10, 10), seed=0,
    )
    base.update(kw)
    return SyntheticTaskSpec(**base)


def test_spec_validation():
    with pytest.raises(ContractError):
        spec(shift=1.5)
    with pytest.raises(ContractError):
        spec(sizes=(0, 1, 1, 1))
    with pytest.raises(ContractError):
        spec(vocab_low=10, vocab_high=300)
    with pytest.raises(ContractError):
        spec(vocab_low=40, vocab_high=45)  # too small for entity pools


def test_generation_determinism():
    a_src, a_tgt, a_map = generate_pair(spec())
    b_src, b_tgt, b_map = generate_pair(spec())
    assert a_map == b_map
    for da, db in [(a_src, b_src)] + [(a_tgt[k], b_tgt[k]) for k in a_tgt]:
        assert len(da) == len(db)
        for (ta, la), (tb, lb) in zip(da.examples, db.examples):
            assert np.array_equal(ta, tb) and np.array_equal(la, lb)


def test_shift_zero_identity_surface():
    s = spec(shift=0.0)
    table = build_mapping(s, np.random.default_rng(0))
    assert np.array_equal(table, np.arange(256))
    toks = np.array([40, 50, 60])
    assert np.array_equal(surface(toks, table), toks)


def test_mapping_counts_exact():
    # usable vocab of 200 at shift 0.5: exactly 100 remapped, overlap 0.5
    s = SyntheticTaskSpec(
        task_kind="token_labeling", n_labels=5, shift=0.5,
        vocab_low=16, vocab_high=215, seq_len=(6, 10),
        sizes=(10, 10, 5, 5), seed=1,
    )
    table = build_mapping(s, np.random.default_rng(7))
    info = mapping_info(s, table)
    assert info["n_remapped"] == 100
    assert info["overlap"] == pytest.approx(0.5)


def test_shift_one_no_fixed_points():
    s = spec(shift=1.0)
    table = build_mapping(s, np.random.default_rng(3))
    vocab = s.vocab
    assert np.all(table[vocab] != vocab)
    # mapped values stay within the usable vocabulary (permutation)
    assert set(table[vocab].tolist()) == set(vocab.tolist())


def test_roles_and_sizes():
    src, tgt, _ = generate_pair(spec())
    assert src.role == "source" and all(t.role == "target" for t in tgt.values())
    assert len(src) == 40 and len(tgt["train"]) == 20
    assert len(tgt["dev"]) == 10 and len(tgt["test"]) == 10


def test_label_distributions_match_across_languages():
    s = spec(sizes=(10000, 10000, 10, 10), seq_len=(8, 12))
    src, tgt, _ = generate_pair(s)

    def label_freq(ds):
        counts = np.zeros(s.n_labels)
        for _, labs in ds.examples:
            for l in labs:
                counts[l] += 1
        return counts / counts.sum()

    diff = np.abs(label_freq(src) - label_freq(tgt["train"])).max()
    assert diff < 0.03


def test_classification_examples_shape():
    s = spec(task_kind="sequence_classification", n_labels=2)
    src, tgt, _ = generate_pair(s)
    toks, y = src.examples[0]
    assert toks.dtype == np.int64 and y in (0, 1)


# ---------------------------------------------------------------------------
# loaders

CONLL = "John\tB-PER\nSmith\tI-PER\nhome\tO\n\nParis\tB-LOC\n"


def test_load_token_labeled(tmp_path):
    path = tmp_path / "a.conll"
    path.write_text(CONLL, encoding="utf-8")
    ds = load_token_labeled(path)
    assert len(ds) == 2
    assert ds.tag_names == ["O", "B-LOC", "I-LOC", "B-PER", "I-PER"]
    toks, labs = ds.examples[0]
    # first bytes of words carry labels, continuations and spaces are ignored
    assert toks[0] == ord("J") and labs[0] == ds.tag_names.index("B-PER")
    assert labs[1] == -1
    space_positions = np.where(toks == 0x20)[0]
    assert all(labs[i] == -1 for i in space_positions)


def test_bio_repair_counts(tmp_path):
    path = tmp_path / "b.conll"
    path.write_text("x\tI-PER\ny\tI-PER\nz\tI-LOC\n", encoding="utf-8")
    ds = load_token_labeled(path)
    # first I-PER repaired to B-PER; the I-LOC after PER also repaired
    assert ds.repairs == 2
    _, labs = ds.examples[0]
    assert ds.tag_names[labs[0]] == "B-PER"


def test_token_loader_errors(tmp_path):
    bad = tmp_path / "bad.conll"
    bad.write_text("token-without-tab\n", encoding="utf-8")
    with pytest.raises(ParseError) as exc:
        load_token_labeled(bad)
    assert "line 1" in str(exc.value)

    unknown = tmp_path / "unk.conll"
    unknown.write_text("x\tB_PER\n", encoding="utf-8")
    with pytest.raises(ContractError) as exc:
        load_token_labeled(unknown)
    assert "B-<TYPE>" in str(exc.value)

    empty = tmp_path / "empty.conll"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(ContractError) as exc:
        load_token_labeled(empty)
    assert "empty dataset" in str(exc.value)


def test_token_round_trip_and_crlf(tmp_path):
    messy = CONLL.replace("\n", "\r\n") + "\r\n"
    clean_sents, _ = parse_token_labeled(CONLL)
    messy_sents, _ = parse_token_labeled(messy)
    assert serialize_token_labeled(messy_sents) == serialize_token_labeled(clean_sents)
    assert serialize_token_labeled(clean_sents) == CONLL


def test_load_sequence_labeled(tmp_path):
    path = tmp_path / "s.tsv"
    path.write_text("1\tgood product\n0\tbad\tstill bad\n", encoding="utf-8")
    ds = load_sequence_labeled(path)
    assert len(ds) == 2
    toks, y = ds.examples[0]
    assert y == 1 and bytes(toks.astype(np.uint8)).decode() == "good product"
    toks2, y2 = ds.examples[1]
    # text after the first tab is preserved verbatim, embedded tabs included
    assert bytes(toks2.astype(np.uint8)).decode() == "bad\tstill bad"


def test_sequence_loader_errors(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("x\toops\n", encoding="utf-8")
    with pytest.raises(ParseError) as exc:
        load_sequence_labeled(bad)
    assert "line 1" in str(exc.value)

    out_of_range = tmp_path / "range.tsv"
    out_of_range.write_text("3\ttext\n", encoding="utf-8")
    with pytest.raises(ContractError):
        load_sequence_labeled(out_of_range)


def test_sequence_crlf_equivalence(tmp_path):
    lf = tmp_path / "lf.tsv"
    crlf = tmp_path / "crlf.tsv"
    content = "1\tgood\n0\tbad\n"
    lf.write_text(content, encoding="utf-8")
    with open(crlf, "w", encoding="utf-8", newline="") as fh:
        fh.write(content.replace("\n", "\r\n"))
    a = load_sequence_labeled(lf)
    b = load_sequence_labeled(crlf)
    for (ta, ya), (tb, yb) in zip(a.examples, b.examples):
        assert np.array_equal(ta, tb) and ya == yb
    assert serialize_sequence_labeled(parse_sequence_labeled(content)) == content


def test_export_import_round_trip(tmp_path):
    src, tgt, _ = generate_pair(spec(vocab_low=40, sizes=(6, 4, 2, 2)))
    out = tmp_path / "src.conll"
    export_dataset(src, out)
    loaded = load_token_labeled(out, role="source")
    assert len(loaded) == len(src)
    for (ta, la), (tb, lb) in zip(src.examples, loaded.examples):
        # exported tokens interleave space separators; strip them back out
        keep = tb != 0x20
        assert np.array_equal(ta, tb[keep])
        gold = [src.tag_names[i] for i in la]
        got = [loaded.tag_names[i] for i in lb[keep]]
        assert got == gold
