import sys

from sdplstm.cli import main

sys.exit(main())
