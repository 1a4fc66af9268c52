import sys

from koopsym.cli import main

sys.exit(main())
