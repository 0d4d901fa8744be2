from harness import judge_checks

if __name__ == "__main__":
    judge_checks()
