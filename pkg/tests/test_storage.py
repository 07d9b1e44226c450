import json

import numpy as np
import pytest

from hmaxface.config import ConfigError, default_config_text, load_config
from hmaxface.hmax import C2CacheDir, HmaxModel, ModelConfig, StorageError, TemplateBank, load_bank, save_bank, verify_bank
from hmaxface.hmax.storage import BANK_MAGIC


def make_bank(n=5, k=4, seed=0):
    rng = np.random.default_rng(seed)
    return TemplateBank("small", 7, rng.random((n, k, k, 4)), rng.integers(0, 9, (n, 3)), 0.12,
                        HmaxModel().config.hash)


def test_bank_round_trip(tmp_path):
    bank = make_bank()
    side = save_bank(bank, tmp_path / "b.bank")
    back = load_bank(tmp_path / "b.bank")
    assert np.array_equal(back.patches, bank.patches.astype(np.float32))
    assert np.array_equal(back.sources, bank.sources)
    assert (back.size_class, back.band, back.sigma, back.config_hash) == \
        (bank.size_class, bank.band, bank.sigma, bank.config_hash)
    meta = json.loads(side.read_text())
    assert meta["bank_hash"] == back.hash == bank.hash
    assert meta["k"] == 4 and meta["n_templates"] == 5 and meta["n_orientations"] == 4
    assert verify_bank(tmp_path / "b.bank") == []


def test_bank_file_header(tmp_path):
    save_bank(make_bank(), tmp_path / "b.bank")
    data = (tmp_path / "b.bank").read_bytes()
    assert data.startswith(BANK_MAGIC)
    assert len(data) > 5 * 4 * 4 * 4 * 4


def test_sidecar_config_hash_matches_model(tmp_path):
    save_bank(make_bank(), tmp_path / "b.bank")
    meta = json.loads((tmp_path / "b.bank.json").read_text())
    assert meta["config_hash"] == ModelConfig().hash


@pytest.mark.parametrize("cut", [3, 12, 30, -1])
def test_truncated_bank_is_rejected(tmp_path, cut):
    save_bank(make_bank(), tmp_path / "b.bank")
    data = (tmp_path / "b.bank").read_bytes()
    (tmp_path / "b.bank").write_bytes(data[:cut])
    with pytest.raises(StorageError):
        load_bank(tmp_path / "b.bank")
    assert verify_bank(tmp_path / "b.bank")


def test_tampered_bank_detected(tmp_path):
    save_bank(make_bank(), tmp_path / "b.bank")
    data = bytearray((tmp_path / "b.bank").read_bytes())
    data[-1] ^= 0xFF
    (tmp_path / "b.bank").write_bytes(bytes(data))
    problems = verify_bank(tmp_path / "b.bank")
    assert any("hash" in p for p in problems)


def test_missing_sidecar(tmp_path):
    save_bank(make_bank(), tmp_path / "b.bank")
    (tmp_path / "b.bank.json").unlink()
    assert verify_bank(tmp_path / "b.bank")


def test_c2_cache_round_trip(tmp_path):
    cache = C2CacheDir(tmp_path)
    img = np.random.default_rng(0).random((8, 8))
    assert cache.get("abc", img) is None
    row = cache.put("abc", img, np.array([0.1, 0.2, 0.3]))
    assert row.tolist() == np.float32([0.1, 0.2, 0.3]).astype(float).tolist()
    cache.flush()
    fresh = C2CacheDir(tmp_path)
    assert np.array_equal(fresh.get("abc", img), row)
    assert fresh.get("abc", img + 1) is None
    assert fresh.get("other", img) is None


def test_c2_cache_truncation(tmp_path):
    cache = C2CacheDir(tmp_path)
    cache.put("abc", np.zeros((2, 2)), np.ones(4))
    cache.flush()
    path = next(tmp_path.glob("c2-*.bin"))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(StorageError):
        C2CacheDir(tmp_path).get("abc", np.zeros((2, 2)))


# ---------- config ----------

def test_default_config_matches_code_defaults():
    cfg = load_config()
    assert cfg.model == ModelConfig()
    assert cfg.model.hash == ModelConfig().hash
    assert cfg.n_templates == 1000
    assert cfg.experiments.coverage_subsets == {"large": 100, "medium": 150}
    assert cfg.experiments.response_band == (0.75, 0.80)
    assert cfg.stimulus.scale == 0.75 and cfg.stimulus.gap_px == 2
    assert cfg.stimulus.cfe_attenuation == 0.1 and cfg.stimulus.wpe_attenuation == 0.5
    assert "format_version = 1" in default_config_text()


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("seed = 9\n[model]\nsigma = 0.2\n[experiments]\ncfe_faces = 10\n")
    cfg = load_config(path, {"model": {"band": 6}})
    assert cfg.seed == 9 and cfg.experiments.seed == 9
    assert cfg.model.sigma == 0.2 and cfg.model.band == 6
    assert cfg.experiments.cfe_faces == 10
    assert cfg.digest != load_config().digest


@pytest.mark.parametrize("text", [
    "bogus = 1\n",
    "[model]\nsigma = -1\n",
    "[model]\nsizes = ['huge']\n",
    "[stimulus]\nscale = 1.5\n",
    "[stimulus]\ncfe_attenuation = 2\n",
    "[experiments]\nresponse_band = [0.8, 0.7]\n",
    "format_version = 99\n",
    "[synthetic]\ncount = 1\n",
    "not toml at all [\n",
])
def test_invalid_configs(tmp_path, text):
    path = tmp_path / "c.toml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)
