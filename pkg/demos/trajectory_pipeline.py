"""Preprocess a small synthetic Geolife-style corpus into MDN training windows."""
import json
import tempfile
from pathlib import Path

from vnfmig import trajdata

with tempfile.TemporaryDirectory() as tmp:
    corpus = Path(tmp) / "geolife"
    trajdata.write_synthetic_corpus(corpus, n_files=3, steps=1500, seed=4)
    print("plt files:", len(trajdata.find_plt_files(corpus)))

    cfg = trajdata.PipelineConfig(resample_interval_s=60.0)
    result = trajdata.preprocess_directory(corpus, cfg)
    print(json.dumps(result.manifest, indent=2))

    split = trajdata.split_segments(result.segments, 0.9, seed=0)
    windows, targets = trajdata.windows_from_segments(split.train)
    print("training windows:", windows.shape, "targets:", targets.shape)

    out = Path(tmp) / "data.csv"
    trajdata.write_dataset(result.segments, out)
    print("round trip ok:", len(trajdata.read_dataset(out)) == len(result.segments))
