"""Regenerate the packaged default ear model table."""

from pathlib import Path

from peaqlab import earmodel

OUT = Path(__file__).resolve().parents[1] / "src" / "peaqlab" / "data" / earmodel.DEFAULT_CONFIG_FILE

if __name__ == "__main__":
    cfg = earmodel.EarModelConfig.from_dict(earmodel.build_default_tables())
    earmodel.write_config(cfg, OUT)
    print(f"wrote {OUT} (sha256 {cfg.checksum})")
