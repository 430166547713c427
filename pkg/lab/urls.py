from django.urls import path

from . import views

urlpatterns = [
    path('health/', views.health_check, name='health_check'),
    path('runs/', views.run_list, name='run_list'),
    path('runs/<int:run_id>/', views.run_detail, name='run_detail'),
]
