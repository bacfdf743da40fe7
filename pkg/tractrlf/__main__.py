import sys

from tractrlf.main import main

sys.exit(main())
