import sys

from optmol.cli import main

sys.exit(main())
