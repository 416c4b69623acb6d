from aipi.cli import main

main()
