import json

import numpy as np
import pytest

from fractalpose.cli import main
from fractalpose.codec import decode, load_code
from fractalpose.image import GrayImage, psnr, read_pgm, write_pgm

from test_gallery import manifest_csv, write_noise_images

FAST_FLAGS = ["--stride", "64"]


def run(argv):
    return main([str(a) for a in argv])


class TestEncodeDecodeCommands:
    def test_encode_decode_round_trip(self, tmp_path, sample_image, capsys):
        src = tmp_path / "in.pgm"
        write_pgm(sample_image, src)
        code_path = tmp_path / "out.hpif"
        assert run(["encode", src, code_path]) == 0
        out = capsys.readouterr().out
        assert "range-size=8" in out
        assert "domains=961" in out
        assert "mean-distortion=" in out
        assert "wall-time=" in out

        code = load_code(code_path)
        assert code.image_w == code.image_h == 256

        dec_path = tmp_path / "dec.pgm"
        assert run(["decode", code_path, dec_path, "--iterations", "10"]) == 0
        dec = read_pgm(dec_path)
        assert psnr(sample_image, dec) >= 25.0

    def test_encode_missing_input(self, tmp_path, capsys):
        code_path = tmp_path / "out.hpif"
        assert run(["encode", tmp_path / "nope.pgm", code_path]) == 2
        assert not code_path.exists()
        assert "error:" in capsys.readouterr().err

    def test_decode_iterations_improve(self, tmp_path, sample_image):
        src = tmp_path / "in.pgm"
        write_pgm(sample_image, src)
        code_path = tmp_path / "c.hpif"
        run(["encode", src, code_path])
        code = load_code(code_path)
        orig = sample_image.pixels.astype(np.float64)
        e1 = ((decode(code, iterations=1).pixels - orig) ** 2).mean()
        e10 = ((decode(code, iterations=10).pixels - orig) ** 2).mean()
        assert e10 <= e1

    def test_decode_corrupt_magic(self, tmp_path, capsys):
        bad = tmp_path / "bad.hpif"
        bad.write_bytes(b"JUNKJUNKJUNKJUNKJUNKJUNKJUNKJUNK")
        assert run(["decode", bad, tmp_path / "x.pgm"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as exc:
            run(["evaluate", "m.csv", "--protocol", "bogus"])
        assert exc.value.code == 2


class TestGalleryCommands:
    def _dataset(self, tmp_path):
        names = write_noise_images(tmp_path, 3, seed=12)
        rows = [(n, 5.0 * i, -2.0 * i, float(i), f"s{i % 2}") for i, n in enumerate(names)]
        return manifest_csv(tmp_path, rows), names

    def test_build_and_estimate_self_match(self, tmp_path, capsys):
        manifest, names = self._dataset(tmp_path)
        gal = tmp_path / "model.hpgl"
        assert run(["build-gallery", manifest, gal, *FAST_FLAGS]) == 0
        capsys.readouterr()

        probe = tmp_path / names[1]
        assert run(["estimate", gal, probe]) == 0
        line = capsys.readouterr().out.strip()
        cols = line.split()
        assert cols[0] == str(probe)
        assert [float(c) for c in cols[1:4]] == [5.0, -2.0, 1.0]
        assert cols[4] == "0"

    def test_estimate_bit_mode(self, tmp_path, capsys):
        manifest, names = self._dataset(tmp_path)
        gal = tmp_path / "model.hpgl"
        run(["build-gallery", manifest, gal, *FAST_FLAGS])
        capsys.readouterr()
        assert run(["estimate", gal, tmp_path / names[0], "--hamming", "bit"]) == 0
        assert capsys.readouterr().out.strip().endswith(" 0")

    def test_build_gallery_bad_row(self, tmp_path, capsys):
        p = manifest_csv(tmp_path, [("missing.pgm", 0, 0, 0, "")])
        assert run(["build-gallery", p, tmp_path / "g.hpgl", *FAST_FLAGS]) == 2
        assert "row 1" in capsys.readouterr().err


class TestEvaluateCommand:
    def _dataset(self, tmp_path, per_subject=3):
        names = write_noise_images(tmp_path, 2 * per_subject, seed=31)
        rows = []
        for i, n in enumerate(names):
            subj = "a" if i < per_subject else "b"
            rows.append((n, float(i), 2.0 * i, -1.0 * i, subj))
        return manifest_csv(tmp_path, rows)

    def test_loo_table_output(self, tmp_path, capsys):
        manifest = self._dataset(tmp_path)
        rc = run(["evaluate", manifest, "--protocol", "loo", *FAST_FLAGS])
        assert rc in (0, 1)  # tiny subjects trigger a small-sample warning
        out = capsys.readouterr().out
        lines = out.strip().splitlines()
        assert lines[0].split()[:4] == ["Subset", "Yaw", "Pitch", "Roll"]
        assert lines[-1].startswith("mean")

    def test_random_protocol_deterministic_outputs(self, tmp_path, capsys):
        manifest = self._dataset(tmp_path, per_subject=5)
        outs = []
        codes = []
        for d in ("r1", "r2"):
            rc = run([
                "evaluate", manifest, "--protocol", "random",
                "--fraction", "0.8", "--seed", "7",
                "--out-dir", tmp_path / d, "--format", "json", *FAST_FLAGS,
            ])
            codes.append(rc)
            capsys.readouterr()
            outs.append({
                name: (tmp_path / d / name).read_bytes()
                for name in ("report.json", "report.txt", "curves.csv", "bins.csv")
            })
        assert codes[0] == codes[1]
        assert outs[0] == outs[1]

    def test_json_format_parses(self, tmp_path, capsys):
        manifest = self._dataset(tmp_path, per_subject=5)
        rc = run(["evaluate", manifest, "--protocol", "random", "--seed", "1",
                  "--format", "json", *FAST_FLAGS])
        assert rc in (0, 1)
        data = json.loads(capsys.readouterr().out)
        assert data["protocol"] == "random"

    def test_missing_manifest(self, tmp_path, capsys):
        assert run(["evaluate", tmp_path / "none.csv"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_threads_value(self, tmp_path, capsys):
        manifest = self._dataset(tmp_path)
        assert run(["evaluate", manifest, "--threads", "0"]) == 2
