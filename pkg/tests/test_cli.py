import numpy as np
import pytest

from reconet.cli import main
from reconet.io import read_pgm, read_tensor, write_tensor
from reconet.tgm import init_tgm
from reconet.trm import tgm_trm_forward


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_gradcheck_default_passes(capsys):
    code, out, _ = run(capsys, "gradcheck")
    assert code == 0
    assert out.splitlines()[-1].startswith("PASS")
    assert "tgm.channel_weight" in out


def test_gradcheck_deterministic_and_unsatisfiable(capsys):
    _, first, _ = run(capsys, "gradcheck", "--seed", "2")
    _, second, _ = run(capsys, "gradcheck", "--seed", "2")
    assert first == second
    code, out, _ = run(capsys, "gradcheck", "--tolerance", "1e-30")
    assert code == 1 and out.splitlines()[-1].startswith("FAIL")


def test_costs_table(capsys):
    code, out, _ = run(capsys, "costs", "--C", "512", "--H", "64", "--W", "64", "--r", "64")
    assert code == 0
    assert "TGM+TRM,20971520,8552448" in out
    assert "Non-Local,20401094656,92274688" in out
    assert "ratio: 972.8" in out


def test_demo_random(capsys, tmp_path):
    code, _, _ = run(capsys, "demo", "--random", "--C", "8", "--H", "16", "--W", "16", "--r", "4", "--out", str(tmp_path))
    assert code == 0
    pgms = sorted(tmp_path.glob("*.pgm"))
    assert len(pgms) == 4
    assert all(read_pgm(p).shape == (16, 16) for p in pgms)
    x = np.random.default_rng(0).normal(size=(8, 16, 16))
    _, a, _ = tgm_trm_forward(x, init_tgm(8, 4, 0))
    assert np.array_equal(read_tensor(tmp_path / "attention.rcn1"), a.astype(np.float32).astype(np.float64))


def test_demo_constant_input_is_gray(capsys, tmp_path):
    write_tensor(tmp_path / "x.rcn1", np.full((3, 5, 4), 2.0))
    code, _, _ = run(capsys, "demo", "--input", str(tmp_path / "x.rcn1"), "--zero-params", "--r", "2", "--out", str(tmp_path / "o"))
    assert code == 0
    for p in (tmp_path / "o").glob("*.pgm"):
        assert np.all(read_pgm(p) == 128)


def test_demo_outputs_byte_identical(capsys, tmp_path):
    for d in ("a", "b"):
        run(capsys, "demo", "--random", "--C", "3", "--H", "4", "--W", "4", "--r", "2", "--out", str(tmp_path / d))
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_demo_bad_input(capsys, tmp_path):
    (tmp_path / "bad.rcn1").write_bytes(b"NOPE" + bytes(12))
    code, _, err = run(capsys, "demo", "--input", str(tmp_path / "bad.rcn1"), "--out", str(tmp_path))
    assert code == 2 and "bad magic" in err
    code, _, _ = run(capsys, "demo", "--input", str(tmp_path / "missing.rcn1"), "--out", str(tmp_path))
    assert code == 2


def test_verify(capsys):
    code, out, _ = run(capsys, "verify")
    assert code == 0
    lines = out.splitlines()
    assert lines[-1] == "PASS"
    assert all(line.startswith("PASS") for line in lines)
    assert any("senet" in line for line in lines)


def test_rank_sweep(capsys):
    code, out, _ = run(capsys, "rank-sweep", "--ranks", "1,2")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "r,final_mse"
    assert [int(l.split(",")[0]) for l in lines[1:]] == [1, 2]
    code, out, _ = run(capsys, "rank-sweep", "--ranks", "1", "--target", "rank1")
    assert float(out.splitlines()[1].split(",")[1]) < 1e-6


def test_train_toy(capsys, tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("rank=2\nsteps=5\nnum_images=2\nchannels=4\nheight=8\nwidth=8\n")
    out_csv = tmp_path / "loss.csv"
    code, out, _ = run(capsys, "train-toy", "--config", str(cfg), "--steps", "3", "--out", str(out_csv))
    assert code == 0
    rows = out_csv.read_text().splitlines()
    assert rows[0] == "step,loss_main,loss_aux,loss_total" and len(rows) == 5
    assert "final_pixel_accuracy=" in out


def test_train_toy_bad_config(capsys, tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("nonsense=1\n")
    code, _, _ = run(capsys, "train-toy", "--config", str(cfg))
    assert code == 2


@pytest.mark.parametrize("argv", [["costs", "--bogus"], ["nope"], [], ["rank-sweep", "--ranks", "a,b"]])
def test_usage_errors_exit_2(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
