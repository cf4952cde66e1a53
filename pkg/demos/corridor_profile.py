"""
How much of the crossing road can the ego see while approaching?

Four blocks frame a straight crossing. Driving north from 85 m out, the
visible share of the side roads drops as the blocks close in, then jumps back
once the sensor clears the corners. Prints the per-distance-bin summary.

    python3 demos/corridor_profile.py
"""

from occwarn.sim import visibility_stats
from occwarn.twins import twin
from occwarn.visibility import profile_csv


def main():
    print(profile_csv(visibility_stats(twin("corridor"))), end="")


if __name__ == "__main__":
    main()
