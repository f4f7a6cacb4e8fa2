"""A black-box function served over the line protocol used by ``--oracle-cmd``.

    smt synth --n 16 --K 6 --seed 3 --out-dir run
    smt transform --n 16 --b 4 --oracle-cmd "python3 demos/oracle_server.py" --out-dir run/smt

The function here is a small hand-written rule set: a few single-variable
effects and two interactions.
"""
import sys


def f(x):
    value = 0.5 * x[0] - 0.25 * x[3] + 0.75 * x[7]
    value += 1.5 * (x[1] and x[2])
    value -= 1.0 * (x[4] and x[5] and x[6])
    return value


def main():
    for line in sys.stdin:
        line = line.strip()
        if line == "END":
            return
        count = int(line.split()[1])
        for _ in range(count):
            bits = [c == "1" for c in sys.stdin.readline().strip()]
            sys.stdout.write(f"{f(bits)!r}\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
