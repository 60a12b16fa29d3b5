"""Generate a synthetic world and push it through the whole pipeline.

Calls the command-line entry points exactly as a shell session would:
synth writes the input files plus a ready config, run executes every
stage into an output directory, and report summarizes the results.
Everything lands in a temporary directory that is removed at the end.
"""

import tempfile

from fluflow.cli import main as cli


def main():
    with tempfile.TemporaryDirectory() as root:
        print("== synth ==")
        cli(["synth", "--n", "40", "--d", "12", "--k-features", "2",
             "--kernel-scale", "0.25", "--flow-density", "0.4",
             "--obs-frac", "0.95", "--z-noise", "0.005",
             "--lift-strength", "0.1", "--weeks", "156",
             "--amplitude", "3.0", "--weekly-noise", "0.3",
             "--seed", "5", "--out", root])

        cfg = root + "/pipeline.cfg"
        with open(cfg) as fh:
            text = fh.read()
        text = text.replace("[autoencoder]\nbottleneck = 2",
                            "[autoencoder]\nbottleneck = 2\nepochs = 1000")
        text = text.replace("n_boot = 200", "n_boot = 120")
        with open(cfg, "w") as fh:
            fh.write(text)

        print("\n== run ==")
        cli(["run", "--config", cfg])

        print("\n== report ==")
        cli(["report", "--config", cfg])


if __name__ == "__main__":
    main()
