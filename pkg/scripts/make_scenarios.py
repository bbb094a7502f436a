"""Write the reference scenario directories (maps, masks, regions, scenario files)."""

import argparse

from costmap_traffic import scenarios


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out", nargs="?", default="scenarios")
    args = p.parse_args()
    for name, path in scenarios.build_all(args.out).items():
        print(f"{name:16s} {path}")


if __name__ == "__main__":
    main()
