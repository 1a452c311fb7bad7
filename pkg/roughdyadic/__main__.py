from roughdyadic.main import run

run()
