from django.contrib import admin

from .models import RunRecord


@admin.register(RunRecord)
class RunRecordAdmin(admin.ModelAdmin):
    list_display = ('kind', 'short_hash', 'status', 'tool_version', 'wall_clock_seconds', 'created_at')
    list_filter = ('kind', 'status', 'tool_version')
    search_fields = ('config_hash', 'config_path')
    readonly_fields = ('created_at',)

    @admin.display(description='Config hash')
    def short_hash(self, obj):
        return obj.config_hash[:12]
