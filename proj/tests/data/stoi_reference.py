"""Reference STOI values for the test corpus, computed with pystoi.

Regenerate with:
    NEUROSTEER_STOI_CORPUS=/tmp/stoi build/tests/test_metrics \
        --gtest_also_run_disabled_tests --gtest_filter='*DumpCorpus'
    python3 tests/data/stoi_reference.py /tmp/stoi > tests/data/stoi_reference.json
"""
import json
import sys

import numpy as np
from pystoi import stoi
from scipy.io import wavfile


def main(corpus):
    values = []
    for i in range(20):
        rate, clean = wavfile.read(f"{corpus}/clean_{i}.wav")
        _, proc = wavfile.read(f"{corpus}/proc_{i}.wav")
        values.append(float(stoi(clean.astype(np.float64), proc.astype(np.float64), rate)))
    json.dump({"generator": "pystoi", "stoi": values}, sys.stdout, indent=2)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
