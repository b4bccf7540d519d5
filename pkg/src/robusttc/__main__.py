import sys

from robusttc.cli import main

sys.exit(main())
