# lab/views/run_views.py
import logging

from django.http import JsonResponse
from django.utils import timezone
from django.views.decorators.http import require_http_methods

from lab import __version__
from lab.models import RunRecord

logger = logging.getLogger(__name__)

DEFAULT_PAGE_SIZE = 50
MAX_PAGE_SIZE = 500


@require_http_methods(["GET"])
def health_check(request):
    """Health check endpoint"""
    return JsonResponse({
        "status": "healthy",
        "service": "chemostat-lab",
        "version": __version__,
        "timestamp": timezone.now().isoformat(),
    })


@require_http_methods(["GET"])
def run_list(request):
    """Recorded runs, newest first; ?kind= and ?status= filter, ?limit= caps the page"""
    try:
        runs = RunRecord.objects.all()
        kind = request.GET.get('kind')
        if kind:
            runs = runs.filter(kind=kind)
        status = request.GET.get('status')
        if status:
            runs = runs.filter(status=status)
        try:
            limit = min(int(request.GET.get('limit', DEFAULT_PAGE_SIZE)), MAX_PAGE_SIZE)
        except ValueError:
            return JsonResponse({"status": "error", "error": "limit must be an integer"}, status=400)

        rows = [
            {
                "id": run.id,
                "kind": run.kind,
                "config_hash": run.config_hash,
                "status": run.status,
                "failed_checks": run.failed_checks(),
                "created_at": run.created_at.isoformat(),
            }
            for run in runs[:max(limit, 0)]
        ]
        return JsonResponse({"status": "ok", "count": len(rows), "runs": rows})

    except Exception as e:
        logger.error(f"❌ Error listing runs: {e}")
        return JsonResponse({"status": "error", "error": str(e)}, status=500)


@require_http_methods(["GET"])
def run_detail(request, run_id):
    """Full record of one run"""
    try:
        run = RunRecord.objects.get(id=run_id)
    except RunRecord.DoesNotExist:
        return JsonResponse({"status": "error", "error": f"run {run_id} not found"}, status=404)
    return JsonResponse({"status": "ok", "run": run.as_dict()})
