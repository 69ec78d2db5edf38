"""
The main script that runs the estimator's command line.
Each command wires a run configuration to simulation, estimation,
summaries or counterfactuals.
"""

import sys

from app.cli.commands import main

if __name__ == "__main__":
    sys.exit(main())
