from .evaluator_cd import CD_Evaluator


def load_evaluator(task, *args, **kws):
    if task == 'cd':
        evaluator = CD_Evaluator(**kws)
    else:
        raise NotImplementedError(f"cannot recognize the task {task}.")
    return evaluator
