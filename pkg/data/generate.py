"""Regenerate the example CSV files in this directory."""
import os

from bvselect.cli import write_csv
from bvselect.synthetic import binomial_pair, correlated_duo, linear_planted, negbin_binary_effect

HERE = os.path.dirname(os.path.abspath(__file__))

if __name__ == "__main__":
    write_csv(linear_planted(0), os.path.join(HERE, "linear_p10.csv"))
    write_csv(binomial_pair(0), os.path.join(HERE, "binomial_p2.csv"))
    write_csv(correlated_duo(0), os.path.join(HERE, "binomial_duo_p32.csv"))
    write_csv(negbin_binary_effect(0, N=300, P=20), os.path.join(HERE, "negbin_p20.csv"))
