"""
Chart generation for campaign reports.

Renders the effective-fault percentage of every fault model and, for each
model, how often each fault location takes part in an effective
configuration.
"""

import matplotlib
matplotlib.use('Agg')  # Use non-interactive backend

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Union

logger = logging.getLogger(__name__)

# Chart styling constants
CHART_WIDTH = 10
CHART_HEIGHT = 6
DPI = 150
MAX_LOCATIONS = 20
COLORS = {
    'primary': '#2E86AB',     # Blue
    'secondary': '#A23B72',   # Purple
    'danger': '#C73E1D',      # Red
    'background': '#F8F9FA',  # Light gray
    'text': '#2C3E50',        # Dark gray
    'grid': '#E9ECEF'         # Light grid lines
}

STYLE_CONFIG = {
    'font.family': 'sans-serif',
    'font.size': 10,
    'axes.labelsize': 12,
    'axes.titlesize': 14,
    'xtick.labelsize': 9,
    'ytick.labelsize': 9,
    'figure.facecolor': 'white',
    'axes.facecolor': 'white',
    'axes.edgecolor': COLORS['text'],
    'axes.linewidth': 0.8,
    'grid.color': COLORS['grid'],
    'grid.linestyle': '-',
    'grid.linewidth': 0.5,
    'text.color': COLORS['text']
}


def location_counts(model: Dict) -> pd.Series:
    """Number of effective configurations each location takes part in, most frequent first."""
    counter: Counter = Counter()
    for record in model.get('effective_faults', []):
        for fault in record['faults']:
            counter[fault['location']] += 1
    if not counter:
        return pd.Series(dtype=int)
    series = pd.Series(counter).sort_index()
    return series.sort_values(ascending=False, kind='stable')


class ReportChartGenerator:
    """
    Chart generator for campaign reports.

    Works on the dictionary form of a report (``CampaignReport.to_dict()``
    or a loaded report JSON file).
    """

    def __init__(self):
        plt.rcParams.update(STYLE_CONFIG)
        logger.debug("Report chart generator initialized")

    def generate_report_chart(self, report: Dict, output_path: Union[str, Path]) -> Optional[Path]:
        """
        Generate the campaign chart as a PNG file.

        Args:
            report: Report dictionary
            output_path: PNG file to write

        Returns:
            Path to the written file or None if generation fails
        """
        try:
            models: List[Dict] = report.get('models', [])
            fig, (summary_ax, location_ax) = plt.subplots(
                2, 1, figsize=(CHART_WIDTH, CHART_HEIGHT * 1.6), dpi=DPI
            )
            if models:
                self._plot_effective_percentages(summary_ax, models)
                self._plot_locations(location_ax, models)
            else:
                self._plot_no_data(summary_ax, 'No Fault Models in Report')
                self._plot_no_data(location_ax, '')

            plt.tight_layout()
            output = Path(output_path)
            output.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(output, format='png', dpi=DPI, bbox_inches='tight', facecolor='white')
            plt.close(fig)
            logger.info(f"Chart saved to: {output}")
            return output

        except Exception as e:
            logger.error(f"Failed to generate report chart: {e}")
            plt.close('all')
            return None

    def _plot_effective_percentages(self, ax, models: List[Dict]) -> None:
        labels = [f"{model['name']}\n{model['setting']}, k={model['simultaneous_faults']}" for model in models]
        percentages = [model.get('effective_percent', 0.0) for model in models]
        y_pos = np.arange(len(models))

        colors = [COLORS['danger'] if pct > 0 else COLORS['primary'] for pct in percentages]
        bars = ax.barh(y_pos, percentages, color=colors, alpha=0.8)
        for bar, model in zip(bars, models):
            ax.text(bar.get_width() + 0.5, bar.get_y() + bar.get_height() / 2,
                    f"{model['effective']}/{model['total']}",
                    ha='left', va='center', fontweight='bold', fontsize=9)

        ax.set_yticks(y_pos)
        ax.set_yticklabels(labels)
        ax.invert_yaxis()
        ax.set_xlim(0, max(100.0, max(percentages) + 10))
        ax.set_xlabel('Effective faults (%)', fontweight='bold')
        ax.set_title('Effective Faults per Fault Model', fontweight='bold', pad=12)
        ax.grid(True, axis='x', alpha=0.3)

    def _plot_locations(self, ax, models: List[Dict]) -> None:
        frame = pd.DataFrame({model['name']: location_counts(model) for model in models}).fillna(0)
        if frame.empty:
            self._plot_no_data(ax, 'No Effective Faults')
            return

        frame = frame.loc[frame.sum(axis=1).sort_values(ascending=False, kind='stable').index[:MAX_LOCATIONS]]
        frame.plot.bar(ax=ax, alpha=0.8)
        ax.set_ylabel('Effective configurations', fontweight='bold')
        ax.set_title('Fault Locations in Effective Configurations', fontweight='bold', pad=12)
        ax.grid(True, axis='y', alpha=0.3)
        ax.tick_params(axis='x', labelrotation=45)

    def _plot_no_data(self, ax, message: str) -> None:
        if message:
            ax.text(0.5, 0.5, message, ha='center', va='center', transform=ax.transAxes,
                    fontsize=16, color=COLORS['text'],
                    bbox=dict(boxstyle="round,pad=0.5", facecolor=COLORS['background']))
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xticks([])
        ax.set_yticks([])


def generate_report_chart(report: Dict, output_path: Union[str, Path]) -> Optional[Path]:
    """
    Convenience function to generate a report chart.

    Returns:
        Path to the PNG file or None if failed
    """
    return ReportChartGenerator().generate_report_chart(report, output_path)
