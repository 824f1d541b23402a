"""Drive the full command-line pipeline in a scratch directory.

Equivalent shell session:

    momentloc synth corpus --config run.ini
    momentloc train corpus model.ckpt --config run.ini --loss bce
    momentloc eval model.ckpt corpus --split test --thresholds 0.1,0.3,0.5
    momentloc analyze preds.tsv corpus/annotations.json
"""

import json
import pathlib
import tempfile

from momentloc.cli import main

RUN_INI = """\
[data]
l_c = 32
pool_span = 1

[model]
d = 16
window_sizes = 4,6,8,10,16,24,32
stride = 2

[train]
batch_videos = 32
epochs = 10
learning_rate = 0.001

[synth]
num_videos = 40
seed = 3
"""


def run(argv):
    print(f"$ momentloc {' '.join(argv)}")
    code = main(argv)
    print(f"(exit {code})\n")
    return code


if __name__ == "__main__":
    scratch = pathlib.Path(tempfile.mkdtemp(prefix="momentloc-demo-"))
    config = scratch / "run.ini"
    config.write_text(RUN_INI)
    corpus = scratch / "corpus"
    ckpt = scratch / "model.ckpt"

    run(["synth", str(corpus), "--config", str(config)])
    run(["train", str(corpus), str(ckpt), "--config", str(config), "--loss", "bce"])
    run(["eval", str(ckpt), str(corpus), "--split", "test",
         "--thresholds", "0.1,0.3,0.5"])

    # hand the eval report's raw numbers to something downstream
    report = json.loads((scratch / "model.ckpt.eval.json").read_text())
    print("recall table from the JSON report:", report["recall_at"])

    # the analyze subcommand audits any external predictions file;
    # here: a deliberately wrong one that swaps each video's two moments
    annotations = json.loads((corpus / "annotations.json").read_text())
    preds = scratch / "preds.tsv"
    with open(preds, "w") as fh:
        for vid, entry in sorted(annotations.items())[:8]:
            spans = entry["timestamps"]
            for pos, (start, end) in enumerate(reversed(spans)):
                fh.write(f"{vid}\t{pos}\t{start}\t{end}\n")
    run(["analyze", str(preds), str(corpus / "annotations.json")])

    print(f"artifacts kept in {scratch}")
