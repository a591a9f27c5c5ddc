#!/usr/bin/env python
# -*- coding: utf-8 -*-

import sys, os
import argparse
import logging

from dataset import BlobSpec, synth_gaussian_blobs, save_dataset


def parse_args():
    parser = argparse.ArgumentParser(description="Generate gaussian blob data for simulations")
    parser.add_argument("--seed", type=int, default=0, help="seed for the class centers and the noise")
    parser.add_argument("--num-classes", type=int, default=10)
    parser.add_argument("--dim", type=int, default=20, help="number of features")
    parser.add_argument("--samples-per-class", type=int, default=1000)
    parser.add_argument("--center-scale", type=float, default=30.0, help="distance of each class center from the origin")
    parser.add_argument("--noise-sigma", type=float, default=1.0)
    parser.add_argument("--neighbor-weight", type=float, default=0.25, help="how strongly a class excites the feature axes of its ring neighbours")
    parser.add_argument("--format", type=str, default="raw-f32", choices=["csv", "raw-f32"])
    parser.add_argument("--out-file", type=str, default="_output/data.bin")
    parser.add_argument("--log-file", type=str, default="_output/data_log.txt")
    args = parser.parse_args()
    return args


def main():
    args = parse_args()
    logging.basicConfig(
        format="%(message)s", filename=args.log_file, level=logging.INFO
    )
    logging.info(args)

    spec = BlobSpec(
        num_classes=args.num_classes,
        dim=args.dim,
        samples_per_class=args.samples_per_class,
        center_scale=args.center_scale,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        neighbor_weight=args.neighbor_weight,
    )
    dat = synth_gaussian_blobs(spec)
    save_dataset(dat, args.out_file, args.format)
    logging.info("wrote %d rows, %d features to %s", dat.size, dat.dim, args.out_file)


if __name__ == "__main__":
    main()
