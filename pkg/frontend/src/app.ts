/**
 * DOM wiring for the annotator screen. All logic lives in
 * AnnotationSession; this file only moves state into elements and events
 * back into method calls.
 */

import { AnnotationApiClient } from './client.js';
import { AnnotationSession } from './viewmodel.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function mountApp(baseUrl: string, annotatorId: string): AnnotationSession {
  const session = new AnnotationSession(new AnnotationApiClient(baseUrl), annotatorId);

  const queueList = el<HTMLUListElement>('queue');
  const description = el<HTMLParagraphElement>('description');
  const embeddedTest = el<HTMLElement>('embedded-test');
  const heldoutTests = el<HTMLUListElement>('heldout-tests');
  const programList = el<HTMLUListElement>('programs');
  const feedbackBox = el<HTMLTextAreaElement>('feedback');
  const editor = el<HTMLTextAreaElement>('editor');
  const gauge = el<HTMLSpanElement>('gauge');
  const runButton = el<HTMLButtonElement>('run-tests');
  const runResults = el<HTMLUListElement>('run-results');
  const submitButton = el<HTMLButtonElement>('submit');
  const noticeList = el<HTMLUListElement>('notices');
  const claimButton = el<HTMLButtonElement>('claim');

  function render(): void {
    queueList.replaceChildren(
      ...session.openWork().map((item) => {
        const li = document.createElement('li');
        li.textContent = `task ${item.task_id} (${item.status})`;
        return li;
      }),
    );

    if (session.detail) {
      description.textContent = session.detail.description;
      // the embedded test is the one the model saw; held-out ones decide
      embeddedTest.textContent = session.detail.embedded_test;
      heldoutTests.replaceChildren(
        ...session.detail.heldout_tests.map((test) => {
          const li = document.createElement('li');
          li.textContent = test;
          return li;
        }),
      );
    }

    programList.replaceChildren(
      ...session.programChoices().map((choice) => {
        const li = document.createElement('li');
        const button = document.createElement('button');
        button.textContent = `#${choice.index} ${choice.failureKind} (${choice.length} chars)`;
        button.addEventListener('click', () => {
          void session.selectProgram(choice.index).then(() => {
            editor.value = session.refinementDraft;
            render();
          });
        });
        if (choice.index === session.selectedIndex) li.classList.add('selected');
        li.append(button);
        return li;
      }),
    );

    gauge.textContent = session.gauge.display;
    gauge.classList.toggle('warning', session.gauge.warning);

    runResults.replaceChildren(
      ...(session.lastRunIsCurrent() && session.lastRun
        ? session.lastRun.per_test.map((result) => {
            const li = document.createElement('li');
            li.textContent = `test ${result.test_index}: ${result.passed ? 'ok' : result.message || 'failed'}`;
            li.classList.toggle('failing', !result.passed);
            return li;
          })
        : []),
    );

    submitButton.disabled = !session.submitEnabled();

    noticeList.replaceChildren(
      ...session.notices.map((notice) => {
        const li = document.createElement('li');
        li.textContent = `${notice.kind}: ${notice.text}`;
        li.classList.add(notice.kind);
        return li;
      }),
    );
  }

  claimButton.addEventListener('click', () => {
    void session
      .refreshQueue()
      .then(() => session.claimNext())
      .then(() => render());
  });

  feedbackBox.addEventListener('input', () => {
    session.setFeedback(feedbackBox.value);
    render();
  });

  editor.addEventListener('input', () => {
    void session.setRefinement(editor.value).then(() => render());
  });

  runButton.addEventListener('click', () => {
    void session.runTests().then(() => render());
  });

  submitButton.addEventListener('click', () => {
    void session.submit().then(() => render());
  });

  void session.refreshQueue().then(() => render());
  return session;
}
