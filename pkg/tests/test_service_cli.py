import json
import math

import httpx
import pytest
import yaml

from driftlab.cli import main
from driftlab.service import app


class SyncASGIClient:
    """Synchronous wrapper over the async in-process transport."""

    def _request(self, method, url, **kw):
        import asyncio

        async def go():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(transport=transport, base_url="http://test") as c:
                return await c.request(method, url, **kw)

        return asyncio.run(go())

    def get(self, url, **kw):
        return self._request("GET", url, **kw)

    def post(self, url, **kw):
        return self._request("POST", url, **kw)


@pytest.fixture(scope="module")
def client():
    return SyncASGIClient()


class TestService:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json() == {"status": "ok"}

    def test_lorentz_samples(self, client):
        body = {"p": 3.0, "q": 1.0, "samples": [[1.0, 2.0]]}
        r = client.post("/lorentz", json=body)
        assert r.status_code == 200
        out = r.json()
        assert out["ok"]
        assert out["report"]["norm"] == pytest.approx(3.0 * 2.0 ** (1 / 3), rel=1e-12)
        assert out["report"]["agreement"] < 1e-12

    def test_lorentz_radial_divergence_expected(self, client):
        body = {"p": 3.0, "q": 1.0, "expect_divergence": True,
                "radial": {"profile": "counterexample-drift", "delta": 1.0}}
        r = client.post("/lorentz", json=body)
        assert r.status_code == 200
        out = r.json()
        assert out["ok"] and out["report"]["divergent"]

    def test_lorentz_missing_p_is_422(self, client):
        r = client.post("/lorentz", json={"samples": [[1.0, 1.0]]})
        assert r.status_code == 422

    def test_rearrange(self, client):
        r = client.post("/rearrange", json={"samples": [[1.0, 1.0], [2.0, 0.5]]})
        out = r.json()
        assert r.status_code == 200
        assert out["report"]["values"] == [2.0, 1.0]
        assert out["report"]["breakpoints"] == [0.5, 1.5]
        assert "rearrangement" in out["tables"]

    def test_counterexample_flat_baseline(self, client):
        r = client.post("/counterexample", json={"delta": 0.0, "k_range": [3, 6]})
        assert r.status_code == 200
        out = r.json()
        assert abs(out["report"]["slope"]) < 0.05

    def test_counterexample_bad_annulus_is_400(self, client):
        r = client.post("/counterexample", json={"annulus": [0.3, 0.06]})
        assert r.status_code == 400
        assert isinstance(r.json()["detail"], list)

    def test_solve_box(self, client):
        body = {"domain": {"kind": "box", "lo": [0, 0, 0], "hi": [1, 1, 1], "h": 0.125}}
        r = client.post("/solve", json=body)
        assert r.status_code == 200
        out = r.json()
        assert out["ok"]
        assert out["report"]["residual"] <= 1e-8
        assert out["report"]["sup"] > 0

    def test_green_laplacian(self, client):
        body = {"domain": {"kind": "box", "lo": [-1, -1, -1], "hi": [1, 1, 1], "h": 1 / 16},
                "pole": [0.0, 0.0, 0.0], "m": 8}
        r = client.post("/green", json=body)
        assert r.status_code == 200
        rep = r.json()["report"]
        for key in ("weak_state", "grad_weak", "pointwise_const"):
            assert rep[key] > 0
        assert rep["pointwise_const"] < 1.0 / (4 * math.pi) * 1.5

    def test_green_pole_outside_is_400(self, client):
        body = {"domain": {"kind": "box", "lo": [0, 0, 0], "hi": [1, 1, 1], "h": 1 / 16},
                "pole": [5.0, 5.0, 5.0], "m": 8}
        r = client.post("/green", json=body)
        assert r.status_code == 400

    def test_principles_global_bound(self, client):
        body = {"experiment": "global-bound",
                "domain": {"kind": "ball", "center": [0, 0, 0], "radius": 1.0, "h": 0.2},
                "ladder": [1 / 8, 1 / 12]}
        r = client.post("/principles", json=body)
        assert r.status_code == 200
        out = r.json()
        assert out["report"]["verdict"] == "stable"
        assert out["ok"]

    def test_suite_single_criterion(self, client):
        r = client.post("/suite", json={"criteria": [2]})
        assert r.status_code == 200
        out = r.json()
        assert out["ok"]
        assert out["report"]["results"][0]["criterion"] == 2


class TestCli:
    def test_lorentz_expected_divergence_exit_zero(self, capsys):
        rc = main(["lorentz", "--radial", "counterexample-drift", "--p", "3",
                   "--q", "1", "--expect-divergence"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["divergent"] is True

    def test_lorentz_unexpected_divergence_exit_two(self, capsys):
        rc = main(["lorentz", "--radial", "counterexample-drift", "--p", "3", "--q", "1"])
        assert rc == 2

    def test_green_golden_invocation(self, capsys):
        rc = main(["green", "--preset", "laplacian", "--grid", "16", "--pole", "center"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["pointwise_const"] > 0

    def test_missing_config_keys_exit_one(self, capsys):
        rc = main(["lorentz"])  # neither samples nor radial profile
        assert rc == 1
        assert "validation error" in capsys.readouterr().err

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfg = {"p": 3.0, "q": 2.0, "samples": [[1.0, 2.0]]}
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(cfg))
        rc = main(["lorentz", "--config", str(path), "--q", "1"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        # the flag overrides q; chi_E norm at (3, 1) is 3 |E|^{1/3}
        assert out["norm"] == pytest.approx(3.0 * 2.0 ** (1 / 3), rel=1e-12)

    def test_out_directory_artifacts(self, tmp_path, capsys):
        out_dir = tmp_path / "artifacts"
        rc = main(["rearrange", "--config", str(_write_cfg(tmp_path)), "--out", str(out_dir)])
        assert rc == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert report["values"] == [2.0, 1.0]
        csv = (out_dir / "rearrangement.csv").read_text().splitlines()
        assert csv[0] == "breakpoint,value"
        assert float(csv[1].split(",")[1]) == 2.0

    def test_nonexistent_config_exit_one(self, capsys):
        rc = main(["lorentz", "--config", "/no/such/file.yaml"])
        assert rc == 1
        assert "config error" in capsys.readouterr().err


def _write_cfg(tmp_path):
    path = tmp_path / "re.yaml"
    path.write_text(yaml.safe_dump({"samples": [[1.0, 1.0], [2.0, 0.5]]}))
    return path
