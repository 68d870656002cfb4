import sys

from podtopics.main import main

sys.exit(main())
