// Content script: capture the highlighted price on demand, show the
// per-location panel when results arrive. One in-flight check per tab is
// enforced by the background worker.

import { captureCurrentSelection } from './capture';
import { buildPanelModel, offlineModel, renderPanel, PanelModel } from './panel';
import { CheckStatus } from './api';

const PANEL_ID = 'pricescope-panel-host';

function showPanel(model: PanelModel): void {
  document.getElementById(PANEL_ID)?.remove();
  const host = document.createElement('div');
  host.id = PANEL_ID;
  host.style.cssText =
    'position:fixed;top:12px;right:12px;z-index:2147483647;' +
    'background:#fff;border:1px solid #444;padding:8px;font:13px sans-serif;';
  host.appendChild(renderPanel(model, document));
  document.body.appendChild(host);
}

chrome.runtime.onMessage.addListener((message, _sender, sendResponse) => {
  if (message.type === 'CAPTURE_AND_CHECK') {
    try {
      const capture = captureCurrentSelection(window);
      chrome.runtime.sendMessage({ type: 'SUBMIT_CHECK', capture });
      sendResponse({ ok: true, preview: capture.preview?.canonical ?? null });
    } catch (err) {
      sendResponse({ ok: false, error: String(err) });
    }
    return true;
  }
  if (message.type === 'CHECK_RESULT') {
    showPanel(buildPanelModel(message.status as CheckStatus));
    return;
  }
  if (message.type === 'COORDINATOR_OFFLINE') {
    showPanel(offlineModel());
    return;
  }
});
