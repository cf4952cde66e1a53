"""
The careful driver: braking early keeps the warning silent.

Same crossing layout as the critical twin but with the block set back, and
an ego that slows from 10 m/s to a creep before the stop line. The advisor
first recommends stopping, then once the eastern approach opens up it
switches to keeping the current speed. No warning is raised.

    python3 demos/safe_twin.py
"""

from itertools import groupby

from occwarn.sim import run_frames
from occwarn.twins import twin


def main():
    frames = run_frames(twin("safe"))
    for rec, group in groupby(frames, key=lambda f: f.recommended):
        g = list(group)
        vis = [f.conflict_visibility for f in g if f.conflict_visibility is not None]
        print(f"{rec:<6} t={g[0].t:5.1f}..{g[-1].t:5.1f} s  conflict visibility {min(vis, default=0):.2f}..{max(vis, default=0):.2f}")
    print(f"warnings: {sum(f.warning for f in frames)}")


if __name__ == "__main__":
    main()
