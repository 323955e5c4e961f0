import csv
import io
import json

import pytest

from veil.cli import main


@pytest.fixture
def data(tmp_path):
    path = tmp_path / "d.tsv"
    assert main(["gen-data", "--keys", "30", "--records", "600", "--out", str(path)]) == 0
    return path


def _store(tmp_path):
    return ["--bundle", str(tmp_path / "srv"), "--client", str(tmp_path / "cli")]


def test_setup_query_insert_delete(tmp_path, data, capsys):
    assert main(["setup", str(data), *_store(tmp_path), "--degree", "2", "--seed", "3"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["sa_actual"] <= 1.2 + 1e-9
    assert main(["query", *_store(tmp_path), "k02"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(l.startswith("k02\t") for l in lines)
    assert main(["insert", *_store(tmp_path), "k20", "hello"]) == 0
    main(["query", *_store(tmp_path), "k20"])
    assert "k20\thello" in capsys.readouterr().out
    assert main(["delete", *_store(tmp_path), "k20", "hello"]) == 0
    main(["query", *_store(tmp_path), "k20"])
    assert "hello" not in capsys.readouterr().out


def test_three_record_setup(tmp_path, capsys):
    path = tmp_path / "d.tsv"
    path.write_text("k1\tv1\nk1\tv2\nk2\tv3\n")
    assert main(["setup", str(path), *_store(tmp_path), "--qa", "2", "--sa", "2", "--fanout", "2"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert (summary["n"], summary["bucket_size"]) == (3, 2)


def test_absent_key_prints_nothing(tmp_path, data, capsys):
    main(["setup", str(data), *_store(tmp_path)])
    capsys.readouterr()
    assert main(["query", *_store(tmp_path), "missing"]) == 0
    assert capsys.readouterr().out == ""


def test_missing_file_and_bad_params(tmp_path, data, capsys):
    assert main(["setup", str(tmp_path / "nope.tsv"), *_store(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["setup", str(data), *_store(tmp_path), "--qa", "0.5"]) == 2


def test_tampered_bundle_exit_code(tmp_path, data):
    main(["setup", str(data), *_store(tmp_path)])
    rec = tmp_path / "srv" / "records.bin"
    blob = bytearray(rec.read_bytes())
    blob[50] ^= 0xFF
    rec.write_bytes(bytes(blob))
    assert main(["query", *_store(tmp_path), "k01"]) == 3


def test_ciphertext_tamper_with_valid_digests(tmp_path, data):
    from veil.outsource import load_bundle, store_bundle
    main(["setup", str(data), *_store(tmp_path)])
    bundle = load_bundle(tmp_path / "srv")
    for rid, blob in bundle.record_store.items():
        bundle.record_store[rid] = blob[:-1] + bytes([blob[-1] ^ 1])
    store_bundle(bundle, tmp_path / "srv")
    assert main(["query", *_store(tmp_path), "k01"]) == 3


def _bench(tmp_path, name, threads, monkeypatch):
    monkeypatch.setenv("VEIL_THREADS", threads)
    out = tmp_path / name
    args = ["bench", "--keys", "100", "--records", "2000", "--fanout", "2", "6",
            "--seeds", "2", "--queries", "3", "--out", str(out)]
    assert main(args) == 0
    return list(csv.DictReader(io.StringIO(out.read_text())))


def test_bench_is_deterministic(tmp_path, monkeypatch):
    a = _bench(tmp_path, "a.csv", "2", monkeypatch)
    b = _bench(tmp_path, "b.csv", "1", monkeypatch)
    strip = lambda rows: [{k: v for k, v in r.items() if k not in ("setup_ms", "mean_query_ms")} for r in rows]
    assert strip(a) == strip(b)
    assert len(a) == 2 * 2 + 2
    assert [r["seed"] for r in a[-2:]] == ["mean", "mean"]


def test_bench_flags_failed_cells(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("VEIL_THREADS", "1")
    assert main(["bench", "--keys", "10", "--records", "40", "--fanout", "2",
                 "--degree", "3", "--desired-overlap", "50", "--seeds", "1", "--queries", "1"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows[0]["status"].startswith("error: OverlapInfeasible")


def test_bench_rows_recompute_from_bundles(tmp_path, monkeypatch):
    from veil.analysis import compute_metrics
    from veil.datagen import SkewSpec, generate
    from veil.outsource import load_bundle, load_client
    monkeypatch.setenv("VEIL_THREADS", "1")
    out = tmp_path / "r.csv"
    main(["bench", "--keys", "50", "--records", "800", "--degree", "2", "--seeds", "1",
          "--queries", "1", "--bundle-dir", str(tmp_path / "keep"), "--out", str(out)])
    row = next(csv.DictReader(io.StringIO(out.read_text())))
    d = tmp_path / "keep" / "cell0_seed0"
    m = compute_metrics(generate(SkewSpec(50, 800, 0.4)), load_bundle(d / "server"), load_client(d / "client"))
    assert float(row["sa_actual"]) == pytest.approx(m.sa_actual)
    assert float(row["sr"]) == pytest.approx(m.sr)


def test_analyze_writes_report(tmp_path, capsys):
    path = tmp_path / "d.tsv"
    path.write_text("k1\ta\nk1\tb\nk1\tc\nk2\td\nk2\te\nk3\tf\n")
    main(["setup", str(path), *_store(tmp_path), "--fanout", "1", "--sa", "1"])
    capsys.readouterr()
    assert main(["analyze", str(path), *_store(tmp_path), "--queries", "k1", "--vsr-trials", "50"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["attack"]["per_query_candidates"] == [["k1"]]
    assert rep["leakage"]["mrlen"] == 3


def test_bad_thread_env(monkeypatch, tmp_path):
    monkeypatch.setenv("VEIL_THREADS", "many")
    assert main(["bench", "--keys", "5", "--records", "20", "--seeds", "1", "--fanout", "1"]) == 2
