"""
Benchmark Worker Pool
Runs independent benchmark trials on a bounded thread pool.

Results are returned in completion order; callers sort them. A failing
trial is logged with its arguments and re-raised once every submitted job
has finished or been cancelled.
"""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, List, Sequence, Tuple, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')


def run_jobs(fn: Callable[..., T], jobs: Sequence[Tuple], workers: int = 1) -> List[T]:
    """
    Call fn(*job) for every job.

    Args:
        fn: Trial function
        jobs: Positional argument tuples, one per call
        workers: Pool size; 1 runs the jobs inline

    Returns:
        List of results in completion order

    Raises:
        ValueError: If workers < 1
        Exception: The first exception raised by a job
    """
    if workers < 1:
        raise ValueError(f"Worker count must be >= 1, got {workers}")

    if workers == 1 or len(jobs) <= 1:
        results = []
        for number, job in enumerate(jobs, start=1):
            results.append(fn(*job))
            logger.debug(f"[BENCH] Job {number}/{len(jobs)} done: {job}")
        return results

    logger.info(f"[BENCH] Running {len(jobs)} job(s) on {workers} worker thread(s)")
    results: List[T] = []
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_job = {executor.submit(fn, *job): job for job in jobs}

        for future in as_completed(future_to_job):
            job = future_to_job[future]
            try:
                results.append(future.result())
            except Exception as e:
                logger.error(f"[BENCH] Job {job} failed: {e}", exc_info=True)
                for pending in future_to_job:
                    pending.cancel()
                raise
            logger.debug(f"[BENCH] Job {len(results)}/{len(jobs)} done: {job}")

    return results
